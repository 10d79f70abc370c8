#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"

namespace ibu::masking {

enum class Strategy : std::uint8_t { with_replacement, without_replacement };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct MaskSpec {
    std::size_t n = 0;         // feature count
    double sr = 1.0;           // sampling rate in (0,1]
    Strategy strategy = Strategy::without_replacement;
    double mask_value = 0.0;   // value written at unsampled coordinates
};

// k = round_half_up(sr * n)
std::size_t derived_k(const MaskSpec& spec);
void validate(const MaskSpec& spec);

struct DpAccount {
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t n = 0;
    std::size_t k = 0;
    Strategy strategy = Strategy::without_replacement;
};

// Exact feature-sampling privacy accountant:
//   with replacement:    epsilon = k*ln((n+1)/n),     delta = 1 - ((n-1)/n)^k
//   without replacement: epsilon = ln((n+1)/(n+1-k)), delta = k/n
// Depends on (n, k, strategy) only.
DpAccount account_for_k(std::size_t n, std::size_t k, Strategy strategy);
DpAccount account(const MaskSpec& spec);

struct MaskedSample {
    Tensor values;                             // length n
    std::vector<std::size_t> sampled_indices;  // sorted, distinct
};

// Reveals the sampled coordinates and overwrites the rest with mask_value.
// With replacement, k draws are taken and duplicates collapse in the revealed
// set (revelation is idempotent; the accountant still counts k draws).
MaskedSample mask(const Tensor& sample, const MaskSpec& spec, Rng& rng);

// Per-row application with sequential draws from the same stream.
std::vector<MaskedSample> mask_batch(const Tensor& batch, const MaskSpec& spec, Rng& rng);

Tensor masked_values(const std::vector<MaskedSample>& samples);

}  // namespace ibu::masking
