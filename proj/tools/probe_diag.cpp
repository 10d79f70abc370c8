// Scratch diagnostics for the backdoor pipeline; not part of the build.
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
        if (orig_labels[i] == target) continue;
        ++n;
        hits += pred[i] == target;
    }
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

double row_dist(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) {
        double d = a.at(i, k) - b.at(j, k);
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

int main(int argc, char** argv) {
    double mask_value = argc > 1 ? std::strtod(argv[1], nullptr) : 0.5;
    double lr = argc > 2 ? std::strtod(argv[2], nullptr) : 0.02;
    std::size_t steps = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 100;
    double lambda = argc > 4 ? std::strtod(argv[4], nullptr) : 0.3;
    std::size_t trig_w = argc > 5 ? std::strtoul(argv[5], nullptr, 10) : 4;
    double spread = argc > 6 ? std::strtod(argv[6], nullptr) : 0.05;
    std::size_t ld = argc > 7 ? std::strtoul(argv[7], nullptr, 10) : 8;
    std::uint64_t mseed = argc > 8 ? std::strtoull(argv[8], nullptr, 10) : 12;

    Rng data_rng(42);
    data::Dataset blobs = data::synth_blobs(data_rng, 4, 250, 16, spread);
    auto [train, test] = data::split_holdout(blobs, 0.2, data_rng);
    Rng part_rng(7);
    data::Partition part = data::make_partition(train, 0.06, data::AuxSource::held_out, part_rng);

    data::BackdoorSpec spec;
    spec.trigger_indices.clear();
    for (std::size_t i = 0; i < trig_w; ++i) spec.trigger_indices.push_back(i);
    spec.trigger_value = 1.0;
    spec.target_label = 0;

    data::Dataset erased_clean = data::select_rows(train, part.erased_rows);
    std::vector<std::size_t> all(erased_clean.m());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    data::Dataset erased_bd = data::inject_backdoor(erased_clean, spec, all);
    data::Dataset poisoned = data::concat(part.remaining, erased_bd);

    Rng init(10);
    vib::VibModel original = vib::make_model(16, {32}, ld, {32}, 4, 1e-3, init);
    Rng t(11);
    vib::train(original, poisoned, {.epochs = 30, .batch_size = 20, .lr = 0.05, .momentum = 0.0}, t);

    masking::MaskSpec ms{16, 0.6, masking::Strategy::without_replacement, mask_value};
    Rng mask_rng(mseed);
    Tensor masked = masking::masked_values(masking::mask_batch(erased_bd.inputs, ms, mask_rng));
    unlearn::ForgetBatch fb{vib::encode(original, masked).mean, erased_bd.labels};

    // geometry: masked codes vs raw-trigger codes vs clean class clusters
    Tensor z_raw = vib::encode(original, erased_bd.inputs).mean;
    Tensor z_aux = vib::encode(original, part.auxiliary.inputs).mean;
    double d_pair = 0.0;
    for (std::size_t i = 0; i < fb.z.rows(); ++i) d_pair += row_dist(fb.z, i, z_raw, i);
    d_pair /= static_cast<double>(fb.z.rows());
    double d_intra = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i + 1 < z_raw.rows(); ++i, ++cnt) d_intra += row_dist(z_raw, i, z_raw, i + 1);
    d_intra /= static_cast<double>(cnt);
    double d_aux = 0.0;
    cnt = 0;
    for (std::size_t i = 0; i < fb.z.rows(); ++i)
        for (std::size_t j = 0; j < z_aux.rows(); ++j, ++cnt) d_aux += row_dist(fb.z, i, z_aux, j);
    d_aux /= static_cast<double>(cnt);
    std::printf("[geom] trig_w=%zu mv=%.2f  d(masked,raw-trig)=%.3f  raw-trig intra=%.3f  d(masked,aux)=%.3f\n",
                trig_w, mask_value, d_pair, d_intra, d_aux);
    std::printf("[orig] test=%.3f bd=%.3f\n", vib::accuracy(original, test),
                backdoor_acc(original, erased_bd, erased_clean.labels, 0));

    // pure forgetting: gradient steps on the forget objective only
    Rng crng(99);
    mine::StatNet critic = mine::make_statnet(ld, {64, 64}, crng);
    vib::VibModel cur = original;
    mine::PairSampler sampler = [&](Rng& r) {
        auto idx = uniform_indices(r, fb.m(), 48, true);
        Tensor first = Tensor::zeros({idx.size(), ld});
        Tensor ax = Tensor::zeros({idx.size(), 16});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < ld; ++j) first.at(i, j) = fb.z.at(idx[i], j);
            for (std::size_t j = 0; j < 16; ++j) ax.at(i, j) = part.auxiliary.inputs.at(idx[i], j);
        }
        vib::GaussianCode code = vib::encode(cur, ax);
        return mine::concat_pairs(first, vib::sample_code_with_noise(code, gaussian(r, {idx.size(), ld})));
    };
    mine::StatTrainConfig warm{.steps = 200, .lr = 0.002, .momentum = 0.9, .ema_decay = 0.99};
    mine::train_statnet(critic, sampler, warm, crng);

    ParamSet cvel, avel;
    Rng frng(55);
    std::vector<std::size_t> perm(fb.m());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t s = 0; s < steps; ++s) {
        mine::StatTrainConfig inner = warm;
        inner.steps = 5;
        mine::train_statnet(critic, sampler, inner, crng);
        Tensor eps = gaussian(frng, {fb.m(), ld});
        shuffle_indices(frng, perm);
        ParamSet cg, ag;
        unlearn::ForgetValue fv = unlearn::forget_loss_with_noise(cur, critic, fb, part.auxiliary.inputs,
                                                                  eps, perm, lambda, &cg, &ag);
        ParamSet gc = zeros_like(cur.compressor.params), ga = zeros_like(cur.approximator.params);
        axpy_params(gc, cg, 1.0);
        axpy_params(ga, ag, 1.0);
        nn::sgd_step(cur.compressor.params, gc, lr, 0.0, cvel);
        nn::sgd_step(cur.approximator.params, ga, lr, 0.0, avel);
        if (s % (steps / 10 ? steps / 10 : 1) == 0)
            std::printf("  step %3zu forget %+.4f dv %+.4f label %+.4f bd=%.3f test=%.3f\n", s, fv.total,
                        fv.dv, fv.label_term, backdoor_acc(cur, erased_bd, erased_clean.labels, 0),
                        vib::accuracy(cur, test));
    }
    std::printf("[pure-forget] bd=%.3f test=%.3f\n", backdoor_acc(cur, erased_bd, erased_clean.labels, 0),
                vib::accuracy(cur, test));

    // who stays stuck on the target label?
    auto pred = vib::predict(cur, erased_bd.inputs);
    Tensor z_cur = vib::encode(cur, erased_bd.inputs).mean;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (erased_clean.labels[i] == 0 || pred[i] != 0) continue;
        std::size_t kept = 0;
        for (std::size_t j : spec.trigger_indices)
            if (masked.at(i, j) == spec.trigger_value) ++kept;
        double dnear = 1e30;
        for (std::size_t r = 0; r < fb.z.rows(); ++r) dnear = std::min(dnear, row_dist(z_cur, i, fb.z, r));
        std::printf("  stuck row %2zu orig_label %u revealed_trigger %zu/%zu d(code,nearest z_e)=%.3f\n",
                    i, erased_clean.labels[i], kept, spec.trigger_indices.size(), dnear);
    }
    return 0;
}
