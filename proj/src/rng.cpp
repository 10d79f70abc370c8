#include "ibu/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ibu {

std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    // u1 in (0,1] so log is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::runtime_error("below(0) is undefined");
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % n;
}

Tensor gaussian(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.normal();
    return t;
}

std::vector<std::size_t> uniform_indices(Rng& rng, std::size_t n, std::size_t k, bool with_replacement) {
    if (n < 1) throw std::runtime_error("uniform_indices requires n >= 1");
    std::vector<std::size_t> out;
    out.reserve(k);
    if (with_replacement) {
        for (std::size_t i = 0; i < k; ++i) out.push_back(rng.below(n));
        return out;
    }
    if (k > n)
        throw std::runtime_error("cannot draw " + std::to_string(k) + " distinct indices from " +
                                 std::to_string(n));
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + rng.below(n - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

void shuffle_indices(Rng& rng, std::vector<std::size_t>& idx) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace ibu
