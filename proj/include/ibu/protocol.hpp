#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibu/masking.hpp"
#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"
#include "ibu/vib.hpp"

namespace ibu::protocol {

inline constexpr std::uint16_t kFormatVersion = 1;

// Reader-side failure: the message names what broke and where.
class FormatError : public std::runtime_error {
  public:
    FormatError(const std::string& what, std::size_t offset);
    std::size_t offset() const { return offset_; }

  private:
    std::size_t offset_;
};

// The half of the model a client downloads: compressor weights plus the
// hyper-parameters needed to run it locally.
struct CompressorCheckpoint {
    std::vector<std::size_t> widths;  // n -> hidden -> 2*latent_dim
    std::size_t latent_dim = 0;
    double beta = 0.0;
    std::uint64_t seed = 0;  // training-seed provenance, 0 when unknown
    ParamSet params;
};

CompressorCheckpoint strip_to_compressor(const vib::VibModel& model, std::uint64_t seed = 0);

// The client-side encoder pass over the downloaded weights.
vib::GaussianCode encode(const CompressorCheckpoint& cp, const Tensor& inputs);

// 64-bit FNV-1a over the 32-bit little-endian parameter payloads in name
// order. Staleness detection only, not tamper-proofing.
std::uint64_t checkpoint_hash(const ParamSet& compressor_params);

void save_compressor(const std::string& path, const CompressorCheckpoint& cp);
CompressorCheckpoint load_compressor(const std::string& path);

// Full-model file in the same container; the trainer keeps these server-side.
void save_model(const std::string& path, const vib::VibModel& model, std::uint64_t seed = 0);
vib::VibModel load_model(const std::string& path);

enum class CodeMode : std::uint8_t { mean_code, sampled };

CodeMode parse_code_mode(const std::string& name);
std::string code_mode_name(CodeMode mode);

// What the client uploads: codes and labels of the erased rows plus the
// masking account, never the raw inputs.
struct UnlearningRequest {
    Tensor z_e;  // m x d
    std::vector<std::uint32_t> y_e;
    masking::DpAccount dp;
    double sr = 0.0;
    double beta_used = 0.0;
    std::uint64_t checkpoint_hash = 0;
};

// Mask the erased inputs, push them through the downloaded compressor, and
// bundle codes + labels + privacy account. mean_code uploads mu; sampled
// draws one z per row.
UnlearningRequest prepare_request(const CompressorCheckpoint& cp, const Tensor& erased_inputs,
                                  const std::vector<std::uint32_t>& erased_labels,
                                  const masking::MaskSpec& spec, CodeMode mode, Rng& rng);

void save_request(const std::string& path, const UnlearningRequest& req);
UnlearningRequest load_request(const std::string& path);

struct Validation {
    bool accepted = false;
    std::string reason;  // empty when accepted

    explicit operator bool() const { return accepted; }
};

// Server-side gate: stale checkpoint hash, latent-dim/label mismatches, and
// privacy metadata that fails recomputation from (n, k, strategy) are all
// rejected as values, not exceptions.
Validation validate_request(const UnlearningRequest& req, const vib::VibModel& server_model);

}  // namespace ibu::protocol
