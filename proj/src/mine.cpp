#include "ibu/mine.hpp"

#include <cmath>
#include <stdexcept>

namespace ibu::mine {

StatNet make_statnet(std::size_t d, std::vector<std::size_t> hidden, Rng& rng) {
    if (d == 0) throw std::runtime_error("statnet needs a positive pair width");
    std::vector<std::size_t> widths{2 * d};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(1);
    return {nn::make_mlp({widths}, rng)};
}

namespace {

std::vector<double> forward_scalar(const nn::Mlp& net, const Tensor& pairs, nn::MlpCache* cache) {
    Tensor out = nn::forward(net, pairs, cache);
    return out.data;  // B x 1
}

double log_mean_exp(const std::vector<double>& t) {
    double mx = t[0];
    for (double v : t) mx = std::max(mx, v);
    double acc = 0.0;
    for (double v : t) acc += std::exp(v - mx);
    return mx + std::log(acc / static_cast<double>(t.size()));
}

double mean(const std::vector<double>& t) {
    double acc = 0.0;
    for (double v : t) acc += v;
    return acc / static_cast<double>(t.size());
}

double mean_abs(const std::vector<double>& t) {
    double acc = 0.0;
    for (double v : t) acc += std::fabs(v);
    return acc / static_cast<double>(t.size());
}

}  // namespace

Tensor concat_pairs(const Tensor& first, const Tensor& second, const std::vector<std::size_t>* perm) {
    std::size_t m = first.rows();
    if (second.rows() != m) throw std::runtime_error("pair batches must have equal row counts");
    if (perm && perm->size() != m) throw std::runtime_error("pair permutation length mismatch");
    std::size_t da = first.cols(), db = second.cols();
    Tensor out = Tensor::zeros({m, da + db});
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t si = perm ? (*perm)[i] : i;
        if (si >= m) throw std::runtime_error("pair permutation index out of range");
        for (std::size_t j = 0; j < da; ++j) out.at(i, j) = first.at(i, j);
        for (std::size_t j = 0; j < db; ++j) out.at(i, da + j) = second.at(si, j);
    }
    return out;
}

double dv_estimate(const StatNet& net, const Tensor& joint, const Tensor& marginal) {
    if (joint.rows() == 0 || marginal.rows() == 0) throw std::runtime_error("dv_estimate needs nonempty batches");
    auto t_joint = forward_scalar(net.net, joint, nullptr);
    auto t_marg = forward_scalar(net.net, marginal, nullptr);
    return mean(t_joint) - log_mean_exp(t_marg);
}

std::vector<double> train_statnet(StatNet& net, const PairSampler& sampler, const StatTrainConfig& cfg,
                                  Rng& rng) {
    std::vector<double> trace;
    ParamSet velocity;
    double ema = 0.0;
    bool ema_ready = false;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        Tensor joint = sampler(rng);
        std::size_t b = joint.rows();
        if (b == 0) throw std::runtime_error("pair sampler returned an empty batch");
        std::size_t width = joint.cols();
        if (width != net.pair_width()) throw std::runtime_error("sampler pair width does not match statnet");
        std::size_t d = width / 2;

        // marginal: shuffle the second half within the batch
        std::vector<std::size_t> perm(b);
        for (std::size_t i = 0; i < b; ++i) perm[i] = i;
        shuffle_indices(rng, perm);
        Tensor marginal = joint;
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) marginal.at(i, d + j) = joint.at(perm[i], d + j);

        nn::MlpCache cache_j, cache_m;
        auto t_joint = forward_scalar(net.net, joint, &cache_j);
        auto t_marg = forward_scalar(net.net, marginal, &cache_m);
        if (mean_abs(t_joint) > 50.0 || mean_abs(t_marg) > 50.0)
            throw std::runtime_error("statnet diverged (mean |T| above 50); lower the learning rate");

        trace.push_back(mean(t_joint) - log_mean_exp(t_marg));

        double batch_mean_e = 0.0;
        std::vector<double> e_marg(b);
        for (std::size_t i = 0; i < b; ++i) {
            e_marg[i] = std::exp(std::min(t_marg[i], 700.0));
            batch_mean_e += e_marg[i] / static_cast<double>(b);
        }
        if (!ema_ready) {
            ema = batch_mean_e;
            ema_ready = true;
        } else {
            ema = cfg.ema_decay * ema + (1.0 - cfg.ema_decay) * batch_mean_e;
        }

        // descent gradient of -DV, with the EMA-corrected denominator
        Tensor d_joint = Tensor::zeros({b, 1});
        Tensor d_marg = Tensor::zeros({b, 1});
        for (std::size_t i = 0; i < b; ++i) {
            d_joint.data[i] = -1.0 / static_cast<double>(b);
            d_marg.data[i] = e_marg[i] / (static_cast<double>(b) * ema);
        }
        ParamSet grads;
        nn::backward(net.net, cache_j, d_joint, grads);
        nn::backward(net.net, cache_m, d_marg, grads);
        nn::sgd_step(net.net.params, grads, cfg.lr, cfg.momentum, velocity);
    }
    return trace;
}

MiLossGrads mi_loss_for_unlearning(const StatNet& net, const Tensor& first, const Tensor& second,
                                   const std::vector<std::size_t>& perm) {
    std::size_t b = first.rows();
    if (b == 0) throw std::runtime_error("dv_estimate needs nonempty batches");
    Tensor joint = concat_pairs(first, second);
    Tensor marginal = concat_pairs(first, second, &perm);

    nn::MlpCache cache_j, cache_m;
    auto t_joint = forward_scalar(net.net, joint, &cache_j);
    auto t_marg = forward_scalar(net.net, marginal, &cache_m);

    MiLossGrads out;
    out.value = mean(t_joint) - log_mean_exp(t_marg);
    out.d_first = Tensor::zeros(first.shape);
    out.d_second = Tensor::zeros(second.shape);

    // d value / d T_joint_i = 1/B; d value / d T_marg_i = -softmax(T_marg)_i
    double mx = t_marg[0];
    for (double v : t_marg) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : t_marg) z += std::exp(v - mx);

    Tensor d_joint = Tensor::full({b, 1}, 1.0 / static_cast<double>(b));
    Tensor d_marg = Tensor::zeros({b, 1});
    for (std::size_t i = 0; i < b; ++i) d_marg.data[i] = -std::exp(t_marg[i] - mx) / z;

    ParamSet scratch;
    Tensor d_in_joint = nn::backward(net.net, cache_j, d_joint, scratch);
    Tensor d_in_marg = nn::backward(net.net, cache_m, d_marg, scratch);

    std::size_t da = first.cols(), db = second.cols();
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < da; ++j)
            out.d_first.at(i, j) += d_in_joint.at(i, j) + d_in_marg.at(i, j);
        for (std::size_t j = 0; j < db; ++j) {
            out.d_second.at(i, j) += d_in_joint.at(i, da + j);
            out.d_second.at(perm[i], j) += d_in_marg.at(i, da + j);
        }
    }
    return out;
}

}  // namespace ibu::mine
