#pragma once

// Shared oracle helpers for the unit and acceptance suites. Everything here is
// an independent re-derivation used to check the library, so nothing in this
// file may call the code path it validates.

#include <cmath>
#include <utility>

#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"
#include "ibu/vib.hpp"

namespace oracle {

// Monte-Carlo divergence between N(mean, diag exp(log_var)) and N(0, I):
// E_{z~p}[log p(z) - log q(z)] with z = mean + sigma*eps, so the ratio is
// -1/2 * sum_j (eps_j^2 + log_var_j - z_j^2).
inline double mc_kl(const ibu::vib::GaussianCode& code, std::size_t samples, ibu::Rng& rng) {
    std::size_t m = code.mean.rows(), d = code.mean.cols();
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        double per_draw = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                double mu = code.mean.at(i, j), lv = code.log_var.at(i, j);
                double eps = rng.normal();
                double z = mu + std::exp(0.5 * lv) * eps;
                per_draw += -0.5 * (eps * eps + lv - z * z);
            }
        acc += per_draw / static_cast<double>(m);
    }
    return acc / static_cast<double>(samples);
}

// Batch of pairs from a bivariate standard normal with correlation rho,
// packed as rows (x, y). Analytic mutual information: -1/2 * ln(1 - rho^2).
inline ibu::Tensor correlated_gaussian_pairs(std::size_t batch, double rho, ibu::Rng& rng) {
    ibu::Tensor out = ibu::Tensor::zeros({batch, 2});
    double c = std::sqrt(1.0 - rho * rho);
    for (std::size_t i = 0; i < batch; ++i) {
        double a = rng.normal(), b = rng.normal();
        out.at(i, 0) = a;
        out.at(i, 1) = rho * a + c * b;
    }
    return out;
}

inline double gaussian_mi(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

}  // namespace oracle
