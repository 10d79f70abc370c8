#pragma once

#include <functional>
#include <string>

#include "ibu/nn.hpp"
#include "ibu/tensor.hpp"

namespace ibu {

struct FdReport {
    double max_rel_err = 0.0;
    std::string worst_param;  // "name[index]"
    bool pass = false;
};

// Central-difference check of `analytic_grads` against `f` perturbed entry by
// entry. Relative error uses max(|analytic|, |numeric|, 1e-6) as scale so that
// near-zero gradients do not blow up the ratio. `f` must be deterministic —
// any sampling inside it has to be frozen by the caller.
FdReport finite_difference_check(const std::function<double(const ParamSet&)>& f, const ParamSet& params,
                                 const ParamSet& analytic_grads, double h, double tol);

// Convenience overload for a plain net under one of the registered losses.
FdReport finite_difference_check(const nn::Mlp& net, const nn::Batch& batch, nn::Loss loss, double h,
                                 double tol);

}  // namespace ibu
