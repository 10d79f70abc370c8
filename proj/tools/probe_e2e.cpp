// Scratch probe for the end-to-end backdoor pipeline; not part of the build.
#include <cstdio>
#include <cstdlib>

#include "ibu/masking.hpp"
#include "ibu/unlearn.hpp"

using namespace ibu;

namespace {

double backdoor_acc(const vib::VibModel& m, const data::Dataset& triggered,
                    const std::vector<std::uint32_t>& orig_labels, std::uint32_t target) {
    auto pred = vib::predict(m, triggered.inputs);
    std::size_t hits = 0, n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (orig_labels[i] == target) continue;  // would predict target anyway
        ++n;
        hits += pred[i] == target;
    }
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

}  // namespace

int main(int argc, char** argv) {
    std::size_t epochs = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 20;
    double lr = argc > 2 ? std::strtod(argv[2], nullptr) : 0.01;
    double lambda = argc > 3 ? std::strtod(argv[3], nullptr) : 0.5;
    double critic_lr = argc > 4 ? std::strtod(argv[4], nullptr) : 0.005;
    std::size_t batch = argc > 5 ? std::strtoul(argv[5], nullptr, 10) : 16;
    std::uint64_t useed = argc > 6 ? std::strtoull(argv[6], nullptr, 10) : 5;
    double spread = argc > 8 ? std::strtod(argv[8], nullptr) : 0.05;
    std::size_t ld = argc > 9 ? std::strtoul(argv[9], nullptr, 10) : 8;
    std::size_t inner = argc > 10 ? std::strtoul(argv[10], nullptr, 10) : 5;
    int auxsrc = argc > 11 ? std::atoi(argv[11]) : 0;
    std::uint32_t target = argc > 13 ? std::strtoul(argv[13], nullptr, 10) : 0;
    std::uint64_t mseed = argc > 14 ? std::strtoull(argv[14], nullptr, 10) : 12;
    std::uint64_t pseed = argc > 15 ? std::strtoull(argv[15], nullptr, 10) : 7;
    std::size_t trig_w = argc > 16 ? std::strtoul(argv[16], nullptr, 10) : 4;

    // data
    Rng data_rng(42);
    data::Dataset blobs = data::synth_blobs(data_rng, 4, 250, 16, spread);
    auto [train, test] = data::split_holdout(blobs, 0.2, data_rng);
    Rng part_rng(pseed);
    data::Partition part = data::make_partition(
        train, 0.06, auxsrc ? data::AuxSource::random_inputs : data::AuxSource::held_out, part_rng);

    std::vector<std::size_t> trig(trig_w);
    std::iota(trig.begin(), trig.end(), std::size_t{0});
    data::BackdoorSpec spec{trig, 1.0, target};
    data::Dataset erased_clean = data::select_rows(train, part.erased_rows);
    std::vector<std::size_t> all(erased_clean.m());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    data::Dataset erased_bd = data::inject_backdoor(erased_clean, spec, all);
    data::Dataset poisoned = data::concat(part.remaining, erased_bd);

    // original model
    Rng init(10);
    vib::VibModel original = vib::make_model(16, {32}, ld, {32}, 4, 1e-3, init);
    Rng t(11);
    vib::train(original, poisoned, {.epochs = 30, .batch_size = 20, .lr = 0.05, .momentum = 0.0}, t);

    double orig_test = vib::accuracy(original, test);
    double orig_bd = backdoor_acc(original, erased_bd, erased_clean.labels, spec.target_label);

    // request: DP-mask the erased inputs, hand over mean codes + labels
    double mask_value = argc > 7 ? std::strtod(argv[7], nullptr) : 0.0;
    masking::MaskSpec ms{16, 0.6, masking::Strategy::without_replacement, mask_value};
    Rng mask_rng(mseed);
    Tensor masked = masking::masked_values(masking::mask_batch(erased_bd.inputs, ms, mask_rng));
    unlearn::ForgetBatch fb{vib::encode(original, masked).mean, erased_bd.labels};

    {
        auto pm = vib::predict(original, masked);
        std::size_t hit0 = 0;
        for (auto p : pm) hit0 += p == 0;
        Tensor logits = nn::forward(original.approximator, fb.z);
        double mlp0 = 0.0;
        for (std::size_t i = 0; i < logits.rows(); ++i) {
            double hi = logits.at(i, 0);
            for (std::size_t j = 1; j < logits.cols(); ++j) hi = std::max(hi, logits.at(i, j));
            double s = 0.0;
            for (std::size_t j = 0; j < logits.cols(); ++j) s += std::exp(logits.at(i, j) - hi);
            mlp0 += logits.at(i, 0) - hi - std::log(s);
        }
        std::printf("[geom] masked->0: %zu/%zu  mean log p(0|z_e) = %.3f\n", hit0, pm.size(),
                    mlp0 / static_cast<double>(logits.rows()));
    }

    // unlearn
    unlearn::UnlearnConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.lr = lr;
    cfg.lambda = lambda;
    cfg.critic_lr = critic_lr;
    cfg.critic_batch = 48;
    cfg.critic_inner_steps = inner;
    cfg.seed = useed;
    unlearn::UnlearnResult res = unlearn::run(original, fb, part.auxiliary, cfg);

    double unl_test = vib::accuracy(res.model, test);
    double unl_bd = backdoor_acc(res.model, erased_bd, erased_clean.labels, spec.target_label);

    // retrain baseline
    Rng rb(13);
    vib::VibModel retr = unlearn::retrain_baseline(
        original, part.remaining, {.epochs = 30, .batch_size = 20, .lr = 0.05, .momentum = 0.0}, rb);
    double retr_test = vib::accuracy(retr, test);
    double retr_bd = backdoor_acc(retr, erased_bd, erased_clean.labels, spec.target_label);

    std::printf(
        "ep=%zu lr=%g lam=%g clr=%g B=%zu seed=%llu | orig test=%.3f bd=%.3f | unl test=%.3f "
        "bd=%.3f | retr test=%.3f bd=%.3f | dv %.4f -> %.4f | alpha0=%.3f alphaN=%.3f label %.3f -> "
        "%.3f\n",
        epochs, lr, lambda, critic_lr, batch, static_cast<unsigned long long>(useed), orig_test,
        orig_bd, unl_test, unl_bd, retr_test, retr_bd, res.trace.front().dv_estimate,
        res.trace.back().dv_estimate, res.trace.front().alpha, res.trace.back().alpha,
        res.trace.front().label_term, res.trace.back().label_term);
    if (argc > 12) {  // any 13th arg: dump the alpha/label trajectory
        for (std::size_t e = 0; e < res.trace.size(); e += (res.trace.size() > 30 ? res.trace.size() / 30 : 1))
            std::printf("  ep %3zu: retain %.4f forget %+.4f alpha %.6f dv %.4f label %+.4f\n", e,
                        res.trace[e].retain_loss, res.trace[e].forget_loss, res.trace[e].alpha,
                        res.trace[e].dv_estimate, res.trace[e].label_term);
    }
    return 0;
}
