#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"

namespace ibu::nn {

// Fully-connected net: widths = {input, hidden..., output}. ReLU between
// layers, linear output.
struct MlpSpec {
    std::vector<std::size_t> widths;

    std::size_t n_in() const { return widths.front(); }
    std::size_t n_out() const { return widths.back(); }
    std::size_t n_layers() const { return widths.size() - 1; }
};

struct Mlp {
    MlpSpec spec;
    ParamSet params;  // W0,b0,W1,b1,... — Wl is widths[l] x widths[l+1]
};

// Weights ~ N(0, 1/fan_in), biases zero.
Mlp make_mlp(MlpSpec spec, Rng& rng);
Mlp make_zero_mlp(MlpSpec spec);

// Activations recorded during forward, consumed by backward.
struct MlpCache {
    std::vector<Tensor> inputs;  // input to each layer (post-activation of previous)
    std::vector<Tensor> pre;     // pre-activation of each layer
};

Tensor forward(const Mlp& net, const Tensor& x, MlpCache* cache = nullptr);

// Backpropagates d_out (batch x n_out); accumulates parameter gradients into
// `grads` (same names as net.params, created if absent) and returns the
// gradient w.r.t. the layer-0 input.
Tensor backward(const Mlp& net, const MlpCache& cache, const Tensor& d_out, ParamSet& grads);

enum class Loss : std::uint8_t {
    squared,       // mean over batch of sum_j (pred_j - target_j)^2
    softmax_xent,  // mean over batch of -log softmax(logits)[label]
};

struct Batch {
    Tensor inputs;                      // m x n_in
    Tensor targets;                     // m x n_out, for squared loss
    std::vector<std::uint32_t> labels;  // length m, for softmax_xent
};

// Loss value and its gradient w.r.t. the predictions.
double squared_loss(const Tensor& pred, const Tensor& target, Tensor* d_pred = nullptr);
double softmax_xent_loss(const Tensor& logits, const std::vector<std::uint32_t>& labels,
                         Tensor* d_logits = nullptr);

// Row-wise softmax probabilities (stable).
Tensor softmax(const Tensor& logits);

// One forward+backward pass through the net under the chosen loss.
double forward_backward(const Mlp& net, const Batch& batch, Loss loss, ParamSet& grads);

// Plain SGD with optional momentum; `velocity` persists across calls.
void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum, ParamSet& velocity);

}  // namespace ibu::nn
