#include "ibu/vib.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ibu::vib {

VibModel make_model(std::size_t n_features, std::vector<std::size_t> compressor_hidden,
                    std::size_t latent_dim, std::vector<std::size_t> approximator_hidden,
                    std::size_t classes, double beta, Rng& rng) {
    if (latent_dim == 0) throw std::runtime_error("latent dimension must be positive");
    if (classes < 2) throw std::runtime_error("model needs at least 2 classes");
    if (!(beta >= 0.0)) throw std::runtime_error("beta must be nonnegative");

    std::vector<std::size_t> cw{n_features};
    cw.insert(cw.end(), compressor_hidden.begin(), compressor_hidden.end());
    cw.push_back(2 * latent_dim);
    std::vector<std::size_t> aw{latent_dim};
    aw.insert(aw.end(), approximator_hidden.begin(), approximator_hidden.end());
    aw.push_back(classes);

    VibModel m;
    m.compressor = nn::make_mlp({cw}, rng);
    m.approximator = nn::make_mlp({aw}, rng);
    m.beta = beta;
    m.latent_dim = latent_dim;
    return m;
}

VibModel reinitialize(const VibModel& model, Rng& rng) {
    VibModel fresh = model;
    fresh.compressor = nn::make_mlp(model.compressor.spec, rng);
    fresh.approximator = nn::make_mlp(model.approximator.spec, rng);
    return fresh;
}

EncodeCache encode_with_cache(const VibModel& model, const Tensor& inputs) {
    EncodeCache ec;
    Tensor out = nn::forward(model.compressor, inputs, &ec.cache);
    std::size_t m = out.rows(), d = model.latent_dim;
    if (out.cols() != 2 * d) throw std::runtime_error("compressor output width is not twice the latent dim");
    ec.code.mean = Tensor::zeros({m, d});
    ec.code.log_var = Tensor::zeros({m, d});
    ec.inside.assign(m * d, true);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            ec.code.mean.at(i, j) = out.at(i, j);
            double raw = out.at(i, d + j);
            if (raw > kLogVarClamp) {
                ec.code.log_var.at(i, j) = kLogVarClamp;
                ec.inside[i * d + j] = false;
            } else if (raw < -kLogVarClamp) {
                ec.code.log_var.at(i, j) = -kLogVarClamp;
                ec.inside[i * d + j] = false;
            } else {
                ec.code.log_var.at(i, j) = raw;
            }
        }
    return ec;
}

void encode_backward(const VibModel& model, const EncodeCache& ec, const Tensor& d_mean,
                     const Tensor& d_log_var, ParamSet& compressor_grads) {
    if (!d_mean.same_shape(ec.code.mean) || !d_log_var.same_shape(ec.code.log_var))
        throw std::runtime_error("code gradient shape does not match code shape");
    std::size_t m = ec.code.mean.rows(), d = model.latent_dim;
    Tensor d_out = Tensor::zeros({m, 2 * d});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            d_out.at(i, j) = d_mean.at(i, j);
            d_out.at(i, d + j) = ec.inside[i * d + j] ? d_log_var.at(i, j) : 0.0;
        }
    nn::backward(model.compressor, ec.cache, d_out, compressor_grads);
}

GaussianCode encode(const VibModel& model, const Tensor& inputs) {
    EncodeCache ec = encode_with_cache(model, inputs);
    check_finite(ec.code.mean, "code mean");
    check_finite(ec.code.log_var, "code log-variance");
    return std::move(ec.code);
}

Tensor sample_code_with_noise(const GaussianCode& code, const Tensor& eps) {
    if (!eps.same_shape(code.mean)) throw std::runtime_error("noise shape does not match code shape");
    Tensor z = code.mean;
    for (std::size_t i = 0; i < z.data.size(); ++i)
        z.data[i] += std::exp(0.5 * code.log_var.data[i]) * eps.data[i];
    return z;
}

Tensor sample_code(const GaussianCode& code, Rng& rng) {
    return sample_code_with_noise(code, gaussian(rng, code.mean.shape));
}

double kl_to_standard_normal(const GaussianCode& code) {
    std::size_t m = code.mean.rows();
    double total = 0.0;
    for (std::size_t i = 0; i < code.mean.data.size(); ++i) {
        double mu = code.mean.data[i], lv = code.log_var.data[i];
        total += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    return total / static_cast<double>(m);
}

IbLossValue ib_loss_with_noise(const VibModel& model, const Tensor& inputs,
                               const std::vector<std::uint32_t>& labels, const Tensor& eps,
                               ParamSet* compressor_grads, ParamSet* approximator_grads) {
    EncodeCache ec = encode_with_cache(model, inputs);
    std::size_t m = ec.code.mean.rows(), d = model.latent_dim;

    // compression term and its partials
    double com = 0.0;
    for (std::size_t i = 0; i < ec.code.mean.data.size(); ++i) {
        double mu = ec.code.mean.data[i], lv = ec.code.log_var.data[i];
        com += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
    com /= static_cast<double>(m);
    if (!std::isfinite(com)) throw std::runtime_error("non-finite value in compression term");

    Tensor z = sample_code_with_noise(ec.code, eps);
    nn::MlpCache acache;
    Tensor logits = nn::forward(model.approximator, z, &acache);
    Tensor d_logits;
    double app = nn::softmax_xent_loss(logits, labels, &d_logits);  // throws naming cross-entropy

    IbLossValue value{model.beta * com + app, com, app};

    if (!compressor_grads && !approximator_grads) return value;

    ParamSet ascratch;
    ParamSet& agrads = approximator_grads ? *approximator_grads : ascratch;
    Tensor dz = nn::backward(model.approximator, acache, d_logits, agrads);

    if (compressor_grads) {
        Tensor d_mean = Tensor::zeros({m, d}), d_log_var = Tensor::zeros({m, d});
        double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double mu = ec.code.mean.at(i, j), lv = ec.code.log_var.at(i, j);
                double sigma = std::exp(0.5 * lv);
                d_mean.at(i, j) = dz.at(i, j) + model.beta * mu * inv_m;
                d_log_var.at(i, j) = dz.at(i, j) * 0.5 * sigma * eps.at(i, j) +
                                     model.beta * 0.5 * (std::exp(lv) - 1.0) * inv_m;
            }
        encode_backward(model, ec, d_mean, d_log_var, *compressor_grads);
    }
    return value;
}

IbLossValue ib_loss(const VibModel& model, const Tensor& inputs, const std::vector<std::uint32_t>& labels,
                    Rng& rng) {
    Tensor eps = gaussian(rng, {inputs.rows(), model.latent_dim});
    return ib_loss_with_noise(model, inputs, labels, eps, nullptr, nullptr);
}

std::vector<double> train(VibModel& model, const data::Dataset& ds, const TrainConfig& cfg, Rng& rng) {
    data::validate(ds);
    if (cfg.batch_size < 1) throw std::runtime_error("batch size must be positive");
    if (ds.num_classes != model.num_classes())
        throw std::runtime_error("dataset classes do not match model output");

    std::vector<double> trace;
    ParamSet cvel, avel;
    std::vector<std::size_t> perm(ds.m());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(rng, perm);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < ds.m(); start += cfg.batch_size) {
            std::size_t stop = std::min(start + cfg.batch_size, ds.m());
            std::vector<std::size_t> rows(perm.begin() + start, perm.begin() + stop);
            data::Dataset batch = data::select_rows(ds, rows);
            Tensor eps = gaussian(rng, {rows.size(), model.latent_dim});

            ParamSet cgrads, agrads;
            IbLossValue v = ib_loss_with_noise(model, batch.inputs, batch.labels, eps, &cgrads, &agrads);
            if (!std::isfinite(v.total) || v.total > 1e6)
                throw std::runtime_error("training diverged (loss " + std::to_string(v.total) +
                                         "); try a lower learning rate");
            nn::sgd_step(model.compressor.params, cgrads, cfg.lr, cfg.momentum, cvel);
            nn::sgd_step(model.approximator.params, agrads, cfg.lr, cfg.momentum, avel);
            epoch_loss += v.total * static_cast<double>(rows.size());
        }
        trace.push_back(epoch_loss / static_cast<double>(ds.m()));
    }
    return trace;
}

static std::vector<std::uint32_t> argmax_rows(const Tensor& logits) {
    std::size_t m = logits.rows(), c = logits.cols();
    std::vector<std::uint32_t> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        out[i] = static_cast<std::uint32_t>(best);
    }
    return out;
}

std::vector<std::uint32_t> predict(const VibModel& model, const Tensor& inputs) {
    GaussianCode code = encode(model, inputs);
    return argmax_rows(nn::forward(model.approximator, code.mean));
}

std::vector<std::uint32_t> predict_sampled(const VibModel& model, const Tensor& inputs, Rng& rng) {
    GaussianCode code = encode(model, inputs);
    return argmax_rows(nn::forward(model.approximator, sample_code(code, rng)));
}

double accuracy(const VibModel& model, const data::Dataset& ds) {
    auto pred = predict(model, ds.inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace ibu::vib
