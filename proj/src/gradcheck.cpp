#include "ibu/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace ibu {

FdReport finite_difference_check(const std::function<double(const ParamSet&)>& f, const ParamSet& params,
                                 const ParamSet& analytic_grads, double h, double tol) {
    if (!(h > 0.0 && h <= 1e-2)) throw std::runtime_error("finite-difference step must be in (0, 1e-2]");
    for (const auto& [name, t] : params) check_finite(t, "parameter " + name);

    FdReport report;
    ParamSet probe = params;
    for (auto& [name, t] : probe) {
        const Tensor& g = analytic_grads.at(name);
        if (!g.same_shape(t)) throw std::runtime_error("gradient shape mismatch for " + name);
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            double saved = t.data[i];
            t.data[i] = saved + h;
            double up = f(probe);
            t.data[i] = saved - h;
            double down = f(probe);
            t.data[i] = saved;
            double numeric = (up - down) / (2.0 * h);
            double analytic = g.data[i];
            double scale = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
            double rel = std::fabs(numeric - analytic) / scale;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

FdReport finite_difference_check(const nn::Mlp& net, const nn::Batch& batch, nn::Loss loss, double h,
                                 double tol) {
    ParamSet grads;
    nn::forward_backward(net, batch, loss, grads);
    nn::Mlp probe = net;
    auto f = [&](const ParamSet& p) {
        probe.params = p;
        ParamSet scratch;
        return nn::forward_backward(probe, batch, loss, scratch);
    };
    return finite_difference_check(f, net.params, grads, h, tol);
}

}  // namespace ibu
