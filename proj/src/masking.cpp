#include "ibu/masking.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ibu/data.hpp"

namespace ibu::masking {

std::string strategy_name(Strategy s) {
    return s == Strategy::with_replacement ? "with_replacement" : "without_replacement";
}

Strategy parse_strategy(const std::string& name) {
    if (name == "with_replacement" || name == "with") return Strategy::with_replacement;
    if (name == "without_replacement" || name == "without") return Strategy::without_replacement;
    throw std::runtime_error("unknown sampling strategy '" + name +
                             "' (expected with_replacement or without_replacement)");
}

std::size_t derived_k(const MaskSpec& spec) { return data::round_half_up(spec.sr * static_cast<double>(spec.n)); }

void validate(const MaskSpec& spec) {
    if (spec.n < 1) throw std::runtime_error("mask spec needs n >= 1");
    if (!(spec.sr > 0.0 && spec.sr <= 1.0)) throw std::runtime_error("sampling rate must be in (0,1]");
    if (!(spec.mask_value >= 0.0 && spec.mask_value <= 1.0))
        throw std::runtime_error("mask value must lie in [0,1]");
    std::size_t k = derived_k(spec);
    if (k < 1) throw std::runtime_error("sampling rate selects zero features");
    if (spec.strategy == Strategy::without_replacement && k > spec.n)
        throw std::runtime_error("cannot sample " + std::to_string(k) + " distinct features from " +
                                 std::to_string(spec.n));
}

DpAccount account_for_k(std::size_t n, std::size_t k, Strategy strategy) {
    if (n < 1) throw std::runtime_error("accountant needs n >= 1");
    DpAccount acct;
    acct.n = n;
    acct.k = k;
    acct.strategy = strategy;
    double dn = static_cast<double>(n), dk = static_cast<double>(k);
    if (strategy == Strategy::with_replacement) {
        acct.epsilon = dk * std::log((dn + 1.0) / dn);
        acct.delta = 1.0 - std::pow((dn - 1.0) / dn, dk);
    } else {
        if (k > n)
            throw std::runtime_error("cannot sample " + std::to_string(k) + " distinct features from " +
                                     std::to_string(n));
        acct.epsilon = std::log((dn + 1.0) / (dn + 1.0 - dk));
        acct.delta = dk / dn;
    }
    return acct;
}

DpAccount account(const MaskSpec& spec) {
    validate(spec);
    return account_for_k(spec.n, derived_k(spec), spec.strategy);
}

MaskedSample mask(const Tensor& sample, const MaskSpec& spec, Rng& rng) {
    validate(spec);
    if (sample.size() != spec.n)
        throw std::runtime_error("sample length " + std::to_string(sample.size()) +
                                 " does not match mask spec n=" + std::to_string(spec.n));
    std::size_t k = derived_k(spec);
    auto draws = uniform_indices(rng, spec.n, k, spec.strategy == Strategy::with_replacement);
    std::set<std::size_t> revealed(draws.begin(), draws.end());

    MaskedSample out;
    out.sampled_indices.assign(revealed.begin(), revealed.end());
    out.values = Tensor::full(sample.shape, spec.mask_value);
    for (std::size_t j : out.sampled_indices) out.values.data[j] = sample.data[j];
    return out;
}

std::vector<MaskedSample> mask_batch(const Tensor& batch, const MaskSpec& spec, Rng& rng) {
    std::size_t m = batch.rows(), n = batch.cols();
    std::vector<MaskedSample> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        Tensor row({1, n}, std::vector<double>(batch.data.begin() + i * n, batch.data.begin() + (i + 1) * n));
        out.push_back(mask(row, spec, rng));
    }
    return out;
}

Tensor masked_values(const std::vector<MaskedSample>& samples) {
    if (samples.empty()) throw std::runtime_error("no masked samples to assemble");
    std::size_t m = samples.size(), n = samples[0].values.size();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        if (samples[i].values.size() != n) throw std::runtime_error("masked samples have mixed widths");
        std::copy(samples[i].values.data.begin(), samples[i].values.data.end(), out.data.begin() + i * n);
    }
    return out;
}

}  // namespace ibu::masking
