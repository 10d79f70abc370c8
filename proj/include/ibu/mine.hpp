#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ibu/nn.hpp"
#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"

namespace ibu::mine {

// Statistics network T(pair) -> scalar, over concatenated (first, second)
// vectors of equal width.
struct StatNet {
    nn::Mlp net;  // 2d -> hidden -> 1

    std::size_t pair_width() const { return net.spec.n_in(); }
};

StatNet make_statnet(std::size_t d, std::vector<std::size_t> hidden, Rng& rng);

// mean_joint(T) - log(mean_marginal(exp T)), with the log-mean-exp max-shifted
// so any |T| <= 700 stays finite. Exactly 0 for a constant T.
double dv_estimate(const StatNet& net, const Tensor& joint, const Tensor& marginal);

struct StatTrainConfig {
    std::size_t steps = 1000;
    double lr = 1e-2;
    double momentum = 0.9;
    double ema_decay = 0.99;
};

// Produces a batch of joint pairs (B x 2d) per call.
using PairSampler = std::function<Tensor(Rng&)>;

// Gradient ascent on the DV bound. Marginal pairs are built by shuffling the
// second half within each batch. The denominator's gradient uses an
// exponential moving average of mean(exp T) — the minibatch DV gradient is
// biased and the EMA is the standard correction. Returns the per-step
// estimate trace; throws if mean |T| exceeds 50.
std::vector<double> train_statnet(StatNet& net, const PairSampler& sampler, const StatTrainConfig& cfg,
                                  Rng& rng);

struct MiLossGrads {
    double value = 0.0;
    Tensor d_first;   // gradient into the first-argument rows
    Tensor d_second;  // gradient into the second-argument rows
};

// The DV value as a loss to minimize, with its exact minibatch gradient into
// both argument batches (statnet parameters are left untouched). `perm` gives
// the in-batch marginal pairing; callers pass it explicitly so finite
// difference checks can freeze it.
MiLossGrads mi_loss_for_unlearning(const StatNet& net, const Tensor& first, const Tensor& second,
                                   const std::vector<std::size_t>& perm);

// (first_i, second_i) rows concatenated; perm reorders the second argument.
Tensor concat_pairs(const Tensor& first, const Tensor& second, const std::vector<std::size_t>* perm = nullptr);

}  // namespace ibu::mine
