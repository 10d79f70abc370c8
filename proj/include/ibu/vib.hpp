#pragma once

#include <cstdint>
#include <vector>

#include "ibu/data.hpp"
#include "ibu/nn.hpp"
#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"

namespace ibu::vib {

// Keeps log-variances inside a range where exp() is tame; far outside any
// useful optimum.
constexpr double kLogVarClamp = 10.0;

// Stochastic-encoder classifier: the compressor maps n features to the mean
// and log-variance of a d-dimensional diagonal Gaussian code, the approximator
// classifies a code sample.
struct VibModel {
    nn::Mlp compressor;    // n -> hidden -> 2*latent_dim
    nn::Mlp approximator;  // latent_dim -> hidden -> classes
    double beta = 0.0;     // weight of the compression term
    std::size_t latent_dim = 0;

    std::size_t n_features() const { return compressor.spec.n_in(); }
    std::size_t num_classes() const { return approximator.spec.n_out(); }
};

VibModel make_model(std::size_t n_features, std::vector<std::size_t> compressor_hidden,
                    std::size_t latent_dim, std::vector<std::size_t> approximator_hidden,
                    std::size_t classes, double beta, Rng& rng);

// Same architecture, fresh weights.
VibModel reinitialize(const VibModel& model, Rng& rng);

struct GaussianCode {
    Tensor mean;     // batch x d
    Tensor log_var;  // batch x d, clamped to [-kLogVarClamp, kLogVarClamp]
};

GaussianCode encode(const VibModel& model, const Tensor& inputs);

// Encoder pass that keeps what the backward pass needs: the layer cache and
// the clamp mask (entries whose raw log-variance hit the clamp pass no
// gradient).
struct EncodeCache {
    nn::MlpCache cache;
    GaussianCode code;
    std::vector<bool> inside;  // batch*d flags, true when inside the clamp
};

EncodeCache encode_with_cache(const VibModel& model, const Tensor& inputs);

// Accumulates compressor gradients for given upstream gradients on the code.
void encode_backward(const VibModel& model, const EncodeCache& ec, const Tensor& d_mean,
                     const Tensor& d_log_var, ParamSet& compressor_grads);

// z = mean + exp(log_var/2) * eps
Tensor sample_code(const GaussianCode& code, Rng& rng);
Tensor sample_code_with_noise(const GaussianCode& code, const Tensor& eps);

// Mean over the batch of KL(N(mean, diag exp(log_var)) || N(0, I)):
// 0.5 * sum_j (mean_j^2 + exp(log_var_j) - 1 - log_var_j). Always >= 0.
double kl_to_standard_normal(const GaussianCode& code);

struct IbLossValue {
    double total = 0.0;  // beta*com + app
    double com = 0.0;    // compression term (KL)
    double app = 0.0;    // approximation term (cross-entropy on sampled code)
};

// One Monte-Carlo code sample per row, drawn from rng.
IbLossValue ib_loss(const VibModel& model, const Tensor& inputs, const std::vector<std::uint32_t>& labels,
                    Rng& rng);

// Deterministic-given-noise variant; optionally accumulates gradients for the
// compressor and approximator. `eps` must be batch x latent_dim.
IbLossValue ib_loss_with_noise(const VibModel& model, const Tensor& inputs,
                               const std::vector<std::uint32_t>& labels, const Tensor& eps,
                               ParamSet* compressor_grads, ParamSet* approximator_grads);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 20;
    double lr = 1e-3;
    double momentum = 0.0;
};

// Shuffled minibatch SGD on the bottleneck loss. Returns the per-epoch mean
// loss trace (length == epochs). epochs == 0 leaves the model untouched.
// Throws when the loss exceeds 1e6 or leaves the finite range.
std::vector<double> train(VibModel& model, const data::Dataset& ds, const TrainConfig& cfg, Rng& rng);

// Deterministic prediction from the code mean; argmax ties break to the
// lowest class index.
std::vector<std::uint32_t> predict(const VibModel& model, const Tensor& inputs);
std::vector<std::uint32_t> predict_sampled(const VibModel& model, const Tensor& inputs, Rng& rng);

double accuracy(const VibModel& model, const data::Dataset& ds);

}  // namespace ibu::vib
