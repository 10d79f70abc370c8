#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "ibu/tensor.hpp"

namespace ibu {

std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);

// Deterministic generator: std::mt19937_64 (Mersenne Twister, the 64-bit
// variant standardized in C++11, with published test vectors) plus hand-rolled
// Box-Muller normals and rejection-sampled bounded integers. std::*_distribution
// is avoided on purpose — its output is implementation-defined, and streams
// here must be reproducible across standard libraries for the same binary.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0,1), 53-bit mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal();

    // Uniform integer in [0, n) by rejection (no modulo bias). n >= 1.
    std::uint64_t below(std::uint64_t n);

    // Independent stream for a named stage: seed ^ FNV-1a64(tag).
    Rng substream(std::string_view tag) const { return Rng(seed_ ^ fnv1a64(tag)); }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

Tensor gaussian(Rng& rng, std::vector<std::size_t> shape);

// Exactly k indices in [0, n). Without replacement: all distinct (partial
// Fisher-Yates); requires k <= n.
std::vector<std::size_t> uniform_indices(Rng& rng, std::size_t n, std::size_t k, bool with_replacement);

// In-place Fisher-Yates shuffle.
void shuffle_indices(Rng& rng, std::vector<std::size_t>& idx);

}  // namespace ibu
