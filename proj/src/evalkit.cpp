#include "ibu/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ibu/mine.hpp"
#include "ibu/nn.hpp"

namespace ibu::evalkit {

namespace {

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
    Tensor out = Tensor::zeros({idx.size(), t.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) out.at(i, j) = t.at(idx[i], j);
    return out;
}

// Softmax probability each model assigns to the true label, from mean codes.
std::vector<double> label_confidence(const vib::VibModel& model, const data::Dataset& ds) {
    Tensor probs = nn::softmax(nn::forward(model.approximator, vib::encode(model, ds.inputs).mean));
    std::vector<double> conf(ds.m());
    for (std::size_t i = 0; i < ds.m(); ++i) {
        if (ds.labels[i] >= probs.cols()) throw std::runtime_error("label out of range");
        conf[i] = probs.at(i, ds.labels[i]);
    }
    return conf;
}

}  // namespace

double backdoor_accuracy(const vib::VibModel& model, const data::Dataset& triggered,
                         std::uint32_t target_label) {
    data::validate(triggered);
    if (target_label >= model.num_classes()) throw std::runtime_error("target label out of range");
    std::vector<std::uint32_t> pred = vib::predict(model, triggered.inputs);
    std::size_t hits = 0;
    for (std::uint32_t p : pred) hits += p == target_label;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

PrivacyDescriptor dual_privacy_descriptor(const vib::VibModel& model, const data::Dataset& probe,
                                          Rng& rng) {
    data::validate(probe);
    std::size_t classes = model.num_classes();
    std::vector<bool> seen(classes, false);
    for (std::uint32_t y : probe.labels) {
        if (y >= classes) throw std::runtime_error("label out of range");
        seen[y] = true;
    }
    for (std::size_t c = 0; c < classes; ++c)
        if (!seen[c])
            throw std::runtime_error("probe set is missing class " + std::to_string(c));

    vib::IbLossValue ib = vib::ib_loss(model, probe.inputs, probe.labels, rng);
    PrivacyDescriptor d;
    d.kl_upper = ib.com;
    d.ce_lower = std::max(0.0, std::log(static_cast<double>(classes)) - ib.app);
    d.phi = std::max(0.0, d.kl_upper - d.ce_lower);
    return d;
}

double reconstruction_attack(const Tensor& train_codes, const Tensor& train_inputs,
                             const Tensor& eval_codes, const Tensor& eval_inputs,
                             const AttackConfig& cfg, Rng& rng) {
    if (train_codes.rank() != 2 || train_inputs.rank() != 2 || eval_codes.rank() != 2 ||
        eval_inputs.rank() != 2)
        throw std::runtime_error("attack tensors must be rank 2");
    if (train_codes.rows() == 0 || eval_codes.rows() == 0)
        throw std::runtime_error("attack sets are empty");
    if (train_codes.rows() != train_inputs.rows())
        throw std::runtime_error("attack training pairs are misaligned");
    if (eval_codes.rows() != eval_inputs.rows())
        throw std::runtime_error("attack evaluation pairs are misaligned");
    if (eval_codes.cols() != train_codes.cols() || eval_inputs.cols() != train_inputs.cols())
        throw std::runtime_error("attack train/eval widths disagree");
    if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0))
        throw std::runtime_error("bad attack config");

    // Column-wise standardization fitted on the training codes; the decoder
    // otherwise has to fight whatever scale the compressor happened to pick.
    std::size_t m = train_codes.rows(), d = train_codes.cols();
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < m; ++i) mu[j] += train_codes.at(i, j);
        mu[j] /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            double c = train_codes.at(i, j) - mu[j];
            sd[j] += c * c;
        }
        sd[j] = std::sqrt(sd[j] / static_cast<double>(m));
        if (sd[j] < 1e-12) sd[j] = 1.0;
    }
    auto standardized = [&](const Tensor& codes) {
        Tensor out = codes;
        for (std::size_t i = 0; i < out.rows(); ++i)
            for (std::size_t j = 0; j < d; ++j) out.at(i, j) = (out.at(i, j) - mu[j]) / sd[j];
        return out;
    };
    Tensor train_z = standardized(train_codes);
    Tensor eval_z = standardized(eval_codes);

    std::vector<std::size_t> widths{train_codes.cols()};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(train_inputs.cols());
    nn::Mlp decoder = nn::make_mlp({widths}, rng);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    ParamSet velocity;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(rng, order);
        for (std::size_t start = 0; start < m; start += cfg.batch_size) {
            std::vector<std::size_t> idx(
                order.begin() + start,
                order.begin() + std::min(m, start + cfg.batch_size));
            nn::Batch batch{take_rows(train_z, idx), take_rows(train_inputs, idx), {}};
            ParamSet grads;
            nn::forward_backward(decoder, batch, nn::Loss::squared, grads);
            nn::sgd_step(decoder.params, grads, cfg.lr, cfg.momentum, velocity);
        }
    }
    return nn::squared_loss(nn::forward(decoder, eval_z), eval_inputs);
}

double auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
    if (positives.empty() || negatives.empty())
        throw std::runtime_error("auc needs nonempty score sets");
    // Midrank statistic: rank-sum of positives with tied scores sharing the
    // average rank.
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(positives.size() + negatives.size());
    for (double s : positives) scored.emplace_back(s, true);
    for (double s : negatives) scored.emplace_back(s, false);
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (scored[k].second) rank_sum += mid;
        i = j;
    }
    double p = static_cast<double>(positives.size());
    double n = static_cast<double>(negatives.size());
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double mia_auc(const vib::VibModel& original, const vib::VibModel& unlearned,
               const data::Dataset& erased, const data::Dataset& non_members) {
    data::validate(erased);
    data::validate(non_members);
    std::vector<double> pos = label_confidence(original, erased);
    std::vector<double> pos_unl = label_confidence(unlearned, erased);
    std::vector<double> neg = label_confidence(original, non_members);
    std::vector<double> neg_unl = label_confidence(unlearned, non_members);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] -= pos_unl[i];
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] -= neg_unl[i];
    return auc(pos, neg);
}

std::vector<MetricsReport> full_report(const vib::VibModel& original,
                                       const vib::VibModel& unlearned,
                                       const vib::VibModel& retrained, const data::Partition& part,
                                       const data::BackdoorSpec& backdoor, const ProbeSpec& probes,
                                       Rng& rng) {
    data::validate(part.erased);
    data::validate(part.auxiliary);
    data::validate(part.test);

    // Replay of the client side: trigger, mask, compress with the weights the
    // client downloaded. The handed-over codes stay fixed across all rows.
    std::vector<std::size_t> all(part.erased.m());
    std::iota(all.begin(), all.end(), std::size_t{0});
    data::Dataset erased_bd = data::inject_backdoor(part.erased, backdoor, all);

    std::vector<std::size_t> bd_rows;
    for (std::size_t i = 0; i < part.erased.m(); ++i)
        if (part.erased.labels[i] != backdoor.target_label) bd_rows.push_back(i);
    if (bd_rows.empty()) throw std::runtime_error("no backdoor evaluation rows left");
    data::Dataset bd_eval = data::select_rows(erased_bd, bd_rows);

    Tensor masked_erased =
        masking::masked_values(masking::mask_batch(erased_bd.inputs, probes.mask, rng));
    Tensor masked_aux =
        masking::masked_values(masking::mask_batch(part.auxiliary.inputs, probes.mask, rng));
    Tensor z_e = vib::encode(original, masked_erased).mean;
    std::size_t d = original.latent_dim;

    std::vector<std::size_t> eval_perm(z_e.rows());
    std::iota(eval_perm.begin(), eval_perm.end(), std::size_t{0});
    shuffle_indices(rng, eval_perm);

    auto dv_probe = [&](const vib::VibModel& model) {
        mine::StatNet critic = mine::make_statnet(d, probes.critic_hidden, rng);
        mine::PairSampler sampler = [&](Rng& r) {
            std::vector<std::size_t> idx =
                uniform_indices(r, z_e.rows(), probes.critic_batch, /*with_replacement=*/true);
            vib::GaussianCode code = vib::encode(model, take_rows(part.auxiliary.inputs, idx));
            return mine::concat_pairs(take_rows(z_e, idx),
                                      vib::sample_code_with_noise(code, gaussian(r, {idx.size(), d})));
        };
        mine::StatTrainConfig cfg;
        cfg.steps = probes.critic_steps;
        cfg.lr = probes.critic_lr;
        cfg.momentum = probes.critic_momentum;
        cfg.ema_decay = probes.ema_decay;
        mine::train_statnet(critic, sampler, cfg, rng);
        Tensor codes = vib::encode(model, part.auxiliary.inputs).mean;
        return mine::dv_estimate(critic, mine::concat_pairs(z_e, codes),
                                 mine::concat_pairs(z_e, codes, &eval_perm));
    };

    auto make_row = [&](std::string name, const vib::VibModel& model) {
        if (model.n_features() != original.n_features() ||
            model.latent_dim != original.latent_dim ||
            model.num_classes() != original.num_classes())
            throw std::runtime_error("report models must share one architecture");
        MetricsReport row;
        row.model = std::move(name);
        row.test_acc = vib::accuracy(model, part.test);
        row.backdoor_acc = backdoor_accuracy(model, bd_eval, backdoor.target_label);
        row.erased_acc = vib::accuracy(model, part.erased);
        PrivacyDescriptor pd = dual_privacy_descriptor(model, part.test, rng);
        row.kl_upper = pd.kl_upper;
        row.ce_lower = pd.ce_lower;
        row.phi = pd.phi;
        row.dv_mi = dv_probe(model);
        row.recon_mse = reconstruction_attack(vib::encode(model, masked_aux).mean,
                                              part.auxiliary.inputs,
                                              vib::encode(model, masked_erased).mean,
                                              erased_bd.inputs, probes.attack, rng);
        row.mia_auc = mia_auc(original, model, part.erased, part.test);
        row.sizes = {part.test.m(), part.erased.m(), bd_eval.m(), part.auxiliary.m()};
        return row;
    };

    return {make_row("original", original), make_row("unlearned", unlearned),
            make_row("retrained", retrained)};
}

namespace {

constexpr const char* kReportHeader =
    "model,test_acc,backdoor_acc,erased_acc,dv_mi,kl_upper,ce_lower,phi,recon_mse,mia_auc";

}  // namespace

void save_report_csv(const std::string& path, const std::vector<MetricsReport>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << kReportHeader << "\n";
    char buf[256];
    for (const MetricsReport& r : rows) {
        std::snprintf(buf, sizeof buf,
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                      r.test_acc, r.backdoor_acc, r.erased_acc, r.dv_mi, r.kl_upper, r.ce_lower,
                      r.phi, r.recon_mse, r.mia_auc);
        out << r.model << "," << buf << "\n";
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<MetricsReport> load_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader)
        throw std::runtime_error("unexpected report header in '" + path + "'");
    std::vector<MetricsReport> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 10)
            throw std::runtime_error("malformed report row '" + line + "'");
        MetricsReport r;
        r.model = cells[0];
        double* fields[] = {&r.test_acc, &r.backdoor_acc, &r.erased_acc, &r.dv_mi,
                            &r.kl_upper, &r.ce_lower,     &r.phi,        &r.recon_mse,
                            &r.mia_auc};
        for (std::size_t i = 0; i < 9; ++i) {
            char* end = nullptr;
            *fields[i] = std::strtod(cells[i + 1].c_str(), &end);
            if (end != cells[i + 1].c_str() + cells[i + 1].size())
                throw std::runtime_error("malformed report row '" + line + "'");
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace ibu::evalkit
