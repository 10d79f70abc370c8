#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibu/data.hpp"
#include "ibu/mine.hpp"
#include "ibu/vib.hpp"

namespace ibu::unlearn {

// The compressed rows handed over for removal. The server never sees the
// raw inputs behind them.
struct ForgetBatch {
    Tensor z;  // m x latent_dim
    std::vector<std::uint32_t> labels;

    std::size_t m() const { return z.rows(); }
};

void validate(const ForgetBatch& fb, const vib::VibModel& model);

// Closed-form two-task weighting: alpha scales the retain gradient,
// (1 - alpha) the forget gradient. When the two gradients (nearly) coincide
// the minimizer is undefined; we fall back to an even split and flag it.
struct MgdaWeights {
    double alpha = 0.5;
    double g_retain_norm = 0.0;
    double g_forget_norm = 0.0;
    bool degenerate = false;
};

MgdaWeights mgda_alpha(const std::vector<double>& g_retain, const std::vector<double>& g_forget,
                       double degeneracy_tol = 1e-12);

struct ForgetValue {
    double total = 0.0;       // lambda * dv + (1 - lambda) * label_term
    double dv = 0.0;          // lower-bound estimate of I(Z_e; Z_a)
    double label_term = 0.0;  // mean log-likelihood of the erased labels, floored
};

// Forgetting objective for one batch. The dependence term couples the handed
// over codes against fresh codes of the auxiliary inputs drawn through the
// current compressor (gradient reaches the compressor); the label term is
// the mean log-likelihood of the erased labels under the approximator
// (gradient reaches the approximator), floored at ln(1/C) - 2 with zero
// gradient once floored. The critic network itself stays fixed here.
ForgetValue forget_loss_with_noise(const vib::VibModel& model, const mine::StatNet& critic,
                                   const ForgetBatch& fb, const Tensor& aux_inputs,
                                   const Tensor& eps, const std::vector<std::size_t>& perm,
                                   double lambda, ParamSet* compressor_grads,
                                   ParamSet* approximator_grads);

ForgetValue forget_loss(const vib::VibModel& model, const mine::StatNet& critic,
                        const ForgetBatch& fb, const Tensor& aux_inputs, double lambda, Rng& rng);

// The retaining objective: the plain IB loss on an auxiliary batch. Thin
// delegate kept so the two sides of the blended update read symmetrically.
vib::IbLossValue retain_loss(const vib::VibModel& model, const Tensor& aux_inputs,
                             const std::vector<std::uint32_t>& aux_labels, Rng& rng,
                             ParamSet* compressor_grads = nullptr,
                             ParamSet* approximator_grads = nullptr);

struct UnlearnConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 20;
    double lr = 1e-3;
    double momentum = 0.0;
    double lambda = 0.5;  // weight of the dependence term inside the forget loss
    std::uint64_t seed = 1;

    // critic schedule
    std::vector<std::size_t> critic_hidden{64, 64};
    std::size_t critic_warmup_steps = 200;
    std::size_t critic_inner_steps = 5;
    std::size_t critic_batch = 64;
    double critic_lr = 1e-2;
    double critic_momentum = 0.9;
    double ema_decay = 0.99;

    // With forgetting off the run reduces to plain training on the
    // auxiliary set; kept for ablations and tests.
    bool disable_forgetting = false;
};

void validate(const UnlearnConfig& cfg);

struct TraceRow {
    std::size_t epoch = 0;
    double retain_loss = 0.0;
    double forget_loss = 0.0;
    double alpha = 0.0;
    double dv_estimate = 0.0;
    double label_term = 0.0;
};

struct UnlearnResult {
    vib::VibModel model;
    std::vector<TraceRow> trace;
};

// Thrown when the blended objective blows up; carries the model as of the
// last completed epoch so callers can keep it.
class DivergedError : public std::runtime_error {
  public:
    DivergedError(const std::string& what, vib::VibModel last_good)
        : std::runtime_error(what), last_good_model(std::move(last_good)) {}
    vib::VibModel last_good_model;
};

// Post-hoc removal: alternates critic ascent with blended descent on the
// retain objective (plain IB loss on the auxiliary set) and the forget
// objective above. Requires |aux| == |fb| so batches pair up.
UnlearnResult run(const vib::VibModel& model, const ForgetBatch& fb, const data::Dataset& aux,
                  const UnlearnConfig& cfg);

// Reference point: re-initialize and train from scratch on the remaining set.
vib::VibModel retrain_baseline(const vib::VibModel& model, const data::Dataset& remaining,
                               const vib::TrainConfig& cfg, Rng& rng);

void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace ibu::unlearn
