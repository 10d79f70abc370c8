#include "ibu/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ibu::unlearn {

void validate(const ForgetBatch& fb, const vib::VibModel& model) {
    if (fb.z.rank() != 2 || fb.z.rows() == 0) throw std::runtime_error("handed-over batch is empty");
    if (fb.z.cols() != model.latent_dim)
        throw std::runtime_error("handed-over code width does not match the model latent dimension");
    if (fb.labels.size() != fb.z.rows())
        throw std::runtime_error("handed-over label count does not match the code rows");
    std::size_t c = model.num_classes();
    for (auto y : fb.labels)
        if (y >= c) throw std::runtime_error("handed-over label out of range");
    check_finite(fb.z, "handed-over codes");
}

void validate(const UnlearnConfig& cfg) {
    if (cfg.batch_size < 1) throw std::runtime_error("batch size must be positive");
    if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) throw std::runtime_error("lambda must be in [0, 1]");
    if (!(cfg.lr > 0.0)) throw std::runtime_error("learning rate must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw std::runtime_error("momentum must be in [0, 1)");
    if (!(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0))
        throw std::runtime_error("ema decay must be in [0, 1)");
    if (cfg.critic_batch < 2) throw std::runtime_error("critic batch must be at least 2");
}

MgdaWeights mgda_alpha(const std::vector<double>& g_retain, const std::vector<double>& g_forget,
                       double degeneracy_tol) {
    if (g_retain.size() != g_forget.size())
        throw std::runtime_error("gradient lengths do not match");
    if (g_retain.empty()) throw std::runtime_error("gradients are empty");

    double rr = 0.0, ff = 0.0, diff2 = 0.0, num = 0.0;
    for (std::size_t i = 0; i < g_retain.size(); ++i) {
        double r = g_retain[i], f = g_forget[i], d = f - r;
        rr += r * r;
        ff += f * f;
        diff2 += d * d;
        num += d * f;
    }
    MgdaWeights w;
    w.g_retain_norm = std::sqrt(rr);
    w.g_forget_norm = std::sqrt(ff);
    if (std::sqrt(diff2) < degeneracy_tol) {
        w.alpha = 0.5;
        w.degenerate = true;
        return w;
    }
    w.alpha = std::clamp(num / diff2, 0.0, 1.0);
    return w;
}

namespace {

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
    std::size_t c = t.cols();
    Tensor out = Tensor::zeros({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= t.rows()) throw std::runtime_error("row index out of range");
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = t.at(rows[i], j);
    }
    return out;
}

// Mean log-likelihood of the given labels plus its gradient w.r.t. the
// logits (gradient of the mean, not scaled by any outer weight).
double mean_log_likelihood(const Tensor& logits, const std::vector<std::uint32_t>& labels,
                           Tensor* d_logits) {
    std::size_t m = logits.rows(), c = logits.cols();
    if (d_logits) *d_logits = Tensor::zeros({m, c});
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double hi = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) hi = std::max(hi, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits.at(i, j) - hi);
        double lse = hi + std::log(sum);
        total += logits.at(i, labels[i]) - lse;
        if (d_logits) {
            double inv_m = 1.0 / static_cast<double>(m);
            for (std::size_t j = 0; j < c; ++j)
                d_logits->at(i, j) = -std::exp(logits.at(i, j) - lse) * inv_m;
            d_logits->at(i, labels[i]) += inv_m;
        }
    }
    return total / static_cast<double>(m);
}

}  // namespace

ForgetValue forget_loss_with_noise(const vib::VibModel& model, const mine::StatNet& critic,
                                   const ForgetBatch& fb, const Tensor& aux_inputs,
                                   const Tensor& eps, const std::vector<std::size_t>& perm,
                                   double lambda, ParamSet* compressor_grads,
                                   ParamSet* approximator_grads) {
    validate(fb, model);
    std::size_t m = fb.m(), d = model.latent_dim;
    if (aux_inputs.rows() != m)
        throw std::runtime_error("auxiliary batch size does not match the handed-over batch");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::runtime_error("lambda must be in [0, 1]");

    // Label side: how well the approximator still predicts the erased
    // labels from their codes, floored so minimization stops near chance.
    nn::MlpCache acache;
    Tensor logits = nn::forward(model.approximator, fb.z, &acache);
    Tensor d_logits;
    double raw = mean_log_likelihood(logits, fb.labels, approximator_grads ? &d_logits : nullptr);
    double floor = -std::log(static_cast<double>(model.num_classes())) - 2.0;
    bool floored = raw < floor;

    // Dependence side: codes of the auxiliary inputs under the current
    // compressor against the handed-over codes.
    vib::EncodeCache ec = vib::encode_with_cache(model, aux_inputs);
    Tensor z_a = vib::sample_code_with_noise(ec.code, eps);
    mine::MiLossGrads mi = mine::mi_loss_for_unlearning(critic, fb.z, z_a, perm);

    ForgetValue v;
    v.dv = mi.value;
    v.label_term = floored ? floor : raw;
    v.total = lambda * v.dv + (1.0 - lambda) * v.label_term;
    if (!std::isfinite(v.total)) throw std::runtime_error("non-finite value in forgetting loss");

    // A side that contributes nothing still gets explicit zero entries so
    // callers can blend gradient sets without key bookkeeping.
    if (approximator_grads) {
        if (!floored && lambda < 1.0) {
            for (double& g : d_logits.data) g *= 1.0 - lambda;
            nn::backward(model.approximator, acache, d_logits, *approximator_grads);
        } else {
            for (const auto& [k, t] : model.approximator.params)
                approximator_grads->try_emplace(k, Tensor::zeros(t.shape));
        }
    }
    if (compressor_grads) {
        if (lambda > 0.0) {
            Tensor d_mean = Tensor::zeros({m, d}), d_log_var = Tensor::zeros({m, d});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < d; ++j) {
                    double g = lambda * mi.d_second.at(i, j);
                    d_mean.at(i, j) = g;
                    d_log_var.at(i, j) = g * 0.5 * std::exp(0.5 * ec.code.log_var.at(i, j)) * eps.at(i, j);
                }
            vib::encode_backward(model, ec, d_mean, d_log_var, *compressor_grads);
        } else {
            for (const auto& [k, t] : model.compressor.params)
                compressor_grads->try_emplace(k, Tensor::zeros(t.shape));
        }
    }
    return v;
}

ForgetValue forget_loss(const vib::VibModel& model, const mine::StatNet& critic,
                        const ForgetBatch& fb, const Tensor& aux_inputs, double lambda, Rng& rng) {
    Tensor eps = gaussian(rng, {fb.m(), model.latent_dim});
    std::vector<std::size_t> perm(fb.m());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle_indices(rng, perm);
    return forget_loss_with_noise(model, critic, fb, aux_inputs, eps, perm, lambda, nullptr, nullptr);
}

vib::IbLossValue retain_loss(const vib::VibModel& model, const Tensor& aux_inputs,
                             const std::vector<std::uint32_t>& aux_labels, Rng& rng,
                             ParamSet* compressor_grads, ParamSet* approximator_grads) {
    Tensor eps = gaussian(rng, {aux_inputs.rows(), model.latent_dim});
    return vib::ib_loss_with_noise(model, aux_inputs, aux_labels, eps, compressor_grads,
                                   approximator_grads);
}

namespace {

// Flat view over both networks' gradients; fills in zeros for parameters a
// term never touched so the two task vectors always line up.
std::vector<double> flat_grads(const vib::VibModel& model, const ParamSet& cgrads,
                               const ParamSet& agrads) {
    ParamSet c = zeros_like(model.compressor.params);
    ParamSet a = zeros_like(model.approximator.params);
    axpy_params(c, cgrads, 1.0);
    axpy_params(a, agrads, 1.0);
    std::vector<double> flat = flatten(c);
    std::vector<double> fa = flatten(a);
    flat.insert(flat.end(), fa.begin(), fa.end());
    return flat;
}

double dv_probe(const vib::VibModel& model, const mine::StatNet& critic, const ForgetBatch& fb,
                const Tensor& aux_inputs, const std::vector<std::size_t>& eval_perm) {
    Tensor codes = vib::encode(model, aux_inputs).mean;
    return mine::dv_estimate(critic, mine::concat_pairs(fb.z, codes),
                             mine::concat_pairs(fb.z, codes, &eval_perm));
}

}  // namespace

UnlearnResult run(const vib::VibModel& model, const ForgetBatch& fb, const data::Dataset& aux,
                  const UnlearnConfig& cfg) {
    validate(cfg);
    validate(fb, model);
    data::validate(aux);
    if (aux.m() != fb.m())
        throw std::runtime_error("auxiliary set size does not match the handed-over batch");
    if (aux.num_classes != model.num_classes())
        throw std::runtime_error("auxiliary classes do not match model output");

    UnlearnResult res{model, {}};
    if (cfg.epochs == 0) return res;

    vib::VibModel& cur = res.model;
    vib::VibModel last_good = cur;
    std::size_t m = fb.m(), d = model.latent_dim;

    Rng rng_retain = Rng(cfg.seed).substream("retain");
    Rng rng_forget = Rng(cfg.seed).substream("forget");
    Rng rng_critic = Rng(cfg.seed).substream("critic");
    Rng rng_eval = Rng(cfg.seed).substream("dv-eval");

    // One fixed mismatched pairing for the per-epoch dependence readout so
    // successive epochs are comparable.
    std::vector<std::size_t> eval_perm(m);
    std::iota(eval_perm.begin(), eval_perm.end(), std::size_t{0});
    shuffle_indices(rng_eval, eval_perm);

    mine::StatNet critic;
    mine::PairSampler sampler;
    mine::StatTrainConfig inner_cfg;
    if (!cfg.disable_forgetting) {
        critic = mine::make_statnet(d, cfg.critic_hidden, rng_critic);
        sampler = [&cur, &fb, &aux, &cfg, d](Rng& r) {
            std::vector<std::size_t> idx =
                uniform_indices(r, fb.m(), cfg.critic_batch, /*with_replacement=*/true);
            Tensor first = take_rows(fb.z, idx);
            vib::GaussianCode code = vib::encode(cur, take_rows(aux.inputs, idx));
            Tensor second = vib::sample_code_with_noise(code, gaussian(r, {idx.size(), d}));
            return mine::concat_pairs(first, second);
        };
        inner_cfg.lr = cfg.critic_lr;
        inner_cfg.momentum = cfg.critic_momentum;
        inner_cfg.ema_decay = cfg.ema_decay;
        inner_cfg.steps = cfg.critic_warmup_steps;
        try {
            mine::train_statnet(critic, sampler, inner_cfg, rng_critic);
        } catch (const std::runtime_error& e) {
            throw DivergedError(e.what(), last_good);
        }
        inner_cfg.steps = cfg.critic_inner_steps;
    }

    ParamSet cvel, avel;
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(rng_retain, perm);
        double sum_retain = 0.0, sum_forget = 0.0, sum_alpha = 0.0, sum_label = 0.0;
        for (std::size_t start = 0; start < m; start += cfg.batch_size) {
            std::size_t stop = std::min(start + cfg.batch_size, m);
            std::vector<std::size_t> rows(perm.begin() + start, perm.begin() + stop);
            double b = static_cast<double>(rows.size());

            data::Dataset aux_batch = data::select_rows(aux, rows);
            Tensor eps_r = gaussian(rng_retain, {rows.size(), d});
            ParamSet cg_r, ag_r;
            vib::IbLossValue rv = vib::ib_loss_with_noise(cur, aux_batch.inputs, aux_batch.labels,
                                                          eps_r, &cg_r, &ag_r);
            if (!std::isfinite(rv.total) || rv.total > 1e6)
                throw DivergedError("unlearning diverged (retain loss " + std::to_string(rv.total) +
                                        "); lower the learning rate",
                                    last_good);

            if (cfg.disable_forgetting) {
                last_good = cur;
                nn::sgd_step(cur.compressor.params, cg_r, cfg.lr, cfg.momentum, cvel);
                nn::sgd_step(cur.approximator.params, ag_r, cfg.lr, cfg.momentum, avel);
                sum_retain += rv.total * b;
                sum_alpha += b;
                continue;
            }

            try {
                mine::train_statnet(critic, sampler, inner_cfg, rng_critic);
            } catch (const std::runtime_error& e) {
                throw DivergedError(e.what(), last_good);
            }

            ForgetBatch fbb{take_rows(fb.z, rows), {}};
            fbb.labels.reserve(rows.size());
            for (auto r : rows) fbb.labels.push_back(fb.labels[r]);
            Tensor eps_f = gaussian(rng_forget, {rows.size(), d});
            std::vector<std::size_t> bperm(rows.size());
            std::iota(bperm.begin(), bperm.end(), std::size_t{0});
            shuffle_indices(rng_forget, bperm);

            ParamSet cg_f, ag_f;
            ForgetValue fv = forget_loss_with_noise(cur, critic, fbb, aux_batch.inputs, eps_f, bperm,
                                                    cfg.lambda, &cg_f, &ag_f);
            if (!std::isfinite(fv.total) || std::fabs(fv.total) > 1e6)
                throw DivergedError("unlearning diverged (forget loss " + std::to_string(fv.total) +
                                        "); lower the learning rate",
                                    last_good);
            last_good = cur;  // both objectives just evaluated sane here

            MgdaWeights w = mgda_alpha(flat_grads(cur, cg_r, ag_r), flat_grads(cur, cg_f, ag_f));

            ParamSet gc = zeros_like(cur.compressor.params);
            ParamSet ga = zeros_like(cur.approximator.params);
            axpy_params(gc, cg_r, w.alpha);
            axpy_params(gc, cg_f, 1.0 - w.alpha);
            axpy_params(ga, ag_r, w.alpha);
            axpy_params(ga, ag_f, 1.0 - w.alpha);
            nn::sgd_step(cur.compressor.params, gc, cfg.lr, cfg.momentum, cvel);
            nn::sgd_step(cur.approximator.params, ga, cfg.lr, cfg.momentum, avel);

            sum_retain += rv.total * b;
            sum_forget += fv.total * b;
            sum_alpha += w.alpha * b;
            sum_label += fv.label_term * b;
        }

        TraceRow row;
        row.epoch = epoch;
        double dm = static_cast<double>(m);
        row.retain_loss = sum_retain / dm;
        row.forget_loss = sum_forget / dm;
        row.alpha = sum_alpha / dm;
        row.label_term = sum_label / dm;
        row.dv_estimate = cfg.disable_forgetting ? 0.0 : dv_probe(cur, critic, fb, aux.inputs, eval_perm);
        res.trace.push_back(row);
    }
    return res;
}

vib::VibModel retrain_baseline(const vib::VibModel& model, const data::Dataset& remaining,
                               const vib::TrainConfig& cfg, Rng& rng) {
    data::validate(remaining);
    vib::VibModel fresh = vib::reinitialize(model, rng);
    vib::train(fresh, remaining, cfg, rng);
    return fresh;
}

void save_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << "epoch,retain_loss,forget_loss,alpha,dv_estimate,label_term\n";
    char buf[256];
    for (const TraceRow& r : trace) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.epoch, r.retain_loss,
                      r.forget_loss, r.alpha, r.dv_estimate, r.label_term);
        f << buf;
    }
    if (!f) throw std::runtime_error("failed writing " + path);
}

}  // namespace ibu::unlearn
