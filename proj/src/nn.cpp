#include "ibu/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ibu::nn {

static void validate_spec(const MlpSpec& spec) {
    if (spec.widths.size() < 2) throw std::runtime_error("mlp needs at least input and output widths");
    for (std::size_t w : spec.widths)
        if (w == 0) throw std::runtime_error("mlp layer width must be positive");
}

Mlp make_mlp(MlpSpec spec, Rng& rng) {
    validate_spec(spec);
    Mlp net{std::move(spec), {}};
    for (std::size_t l = 0; l < net.spec.n_layers(); ++l) {
        std::size_t in = net.spec.widths[l], out = net.spec.widths[l + 1];
        Tensor w = Tensor::zeros({in, out});
        double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& v : w.data) v = scale * rng.normal();
        net.params.emplace("W" + std::to_string(l), std::move(w));
        net.params.emplace("b" + std::to_string(l), Tensor::zeros({1, out}));
    }
    return net;
}

Mlp make_zero_mlp(MlpSpec spec) {
    validate_spec(spec);
    Mlp net{std::move(spec), {}};
    for (std::size_t l = 0; l < net.spec.n_layers(); ++l) {
        std::size_t in = net.spec.widths[l], out = net.spec.widths[l + 1];
        net.params.emplace("W" + std::to_string(l), Tensor::zeros({in, out}));
        net.params.emplace("b" + std::to_string(l), Tensor::zeros({1, out}));
    }
    return net;
}

// out = x @ W + b
static Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    std::size_t m = x.rows(), in = x.cols(), out = w.cols();
    if (w.rows() != in)
        throw std::runtime_error("affine shape mismatch: input " + shape_str(x.shape) + " vs weight " +
                                 shape_str(w.shape));
    Tensor y = Tensor::zeros({m, out});
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = &x.data[i * in];
        double* yi = &y.data[i * out];
        for (std::size_t j = 0; j < out; ++j) yi[j] = b.data[j];
        for (std::size_t k = 0; k < in; ++k) {
            double xv = xi[k];
            if (xv == 0.0) continue;
            const double* wk = &w.data[k * out];
            for (std::size_t j = 0; j < out; ++j) yi[j] += xv * wk[j];
        }
    }
    return y;
}

Tensor forward(const Mlp& net, const Tensor& x, MlpCache* cache) {
    if (x.cols() != net.spec.n_in())
        throw std::runtime_error("input width " + std::to_string(x.cols()) + " does not match net input " +
                                 std::to_string(net.spec.n_in()));
    Tensor h = x;
    for (std::size_t l = 0; l < net.spec.n_layers(); ++l) {
        const Tensor& w = net.params.at("W" + std::to_string(l));
        const Tensor& b = net.params.at("b" + std::to_string(l));
        if (cache) cache->inputs.push_back(h);
        Tensor a = affine(h, w, b);
        if (cache) cache->pre.push_back(a);
        if (l + 1 < net.spec.n_layers())
            for (double& v : a.data) v = v > 0.0 ? v : 0.0;
        h = std::move(a);
    }
    return h;
}

Tensor backward(const Mlp& net, const MlpCache& cache, const Tensor& d_out, ParamSet& grads) {
    std::size_t layers = net.spec.n_layers();
    if (cache.inputs.size() != layers || cache.pre.size() != layers)
        throw std::runtime_error("mlp cache does not match architecture");
    Tensor d = d_out;
    for (std::size_t l = layers; l-- > 0;) {
        const Tensor& pre = cache.pre[l];
        const Tensor& in = cache.inputs[l];
        if (!d.same_shape(pre)) throw std::runtime_error("gradient shape mismatch in layer " + std::to_string(l));
        if (l + 1 < layers)  // ReLU was applied here on the forward pass
            for (std::size_t i = 0; i < d.data.size(); ++i)
                if (pre.data[i] <= 0.0) d.data[i] = 0.0;

        const Tensor& w = net.params.at("W" + std::to_string(l));
        std::size_t m = in.rows(), nin = in.cols(), nout = w.cols();

        auto [wit, winserted] = grads.try_emplace("W" + std::to_string(l), Tensor::zeros(w.shape));
        auto [bit, binserted] = grads.try_emplace("b" + std::to_string(l), Tensor::zeros({1, nout}));
        Tensor& dw = wit->second;
        Tensor& db = bit->second;

        for (std::size_t i = 0; i < m; ++i) {
            const double* di = &d.data[i * nout];
            const double* xi = &in.data[i * nin];
            for (std::size_t j = 0; j < nout; ++j) db.data[j] += di[j];
            for (std::size_t k = 0; k < nin; ++k) {
                double xv = xi[k];
                if (xv == 0.0) continue;
                double* dwk = &dw.data[k * nout];
                for (std::size_t j = 0; j < nout; ++j) dwk[j] += xv * di[j];
            }
        }

        Tensor d_in = Tensor::zeros({m, nin});
        for (std::size_t i = 0; i < m; ++i) {
            const double* di = &d.data[i * nout];
            double* dxi = &d_in.data[i * nin];
            for (std::size_t k = 0; k < nin; ++k) {
                const double* wk = &w.data[k * nout];
                double acc = 0.0;
                for (std::size_t j = 0; j < nout; ++j) acc += wk[j] * di[j];
                dxi[k] = acc;
            }
        }
        d = std::move(d_in);
    }
    return d;
}

double squared_loss(const Tensor& pred, const Tensor& target, Tensor* d_pred) {
    if (!pred.same_shape(target))
        throw std::runtime_error("squared loss shape mismatch: " + shape_str(pred.shape) + " vs " +
                                 shape_str(target.shape));
    std::size_t m = pred.rows();
    double total = 0.0;
    if (d_pred) *d_pred = Tensor::zeros(pred.shape);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        double r = pred.data[i] - target.data[i];
        total += r * r;
        if (d_pred) d_pred->data[i] = 2.0 * r / static_cast<double>(m);
    }
    double loss = total / static_cast<double>(m);
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite value in squared loss");
    return loss;
}

Tensor softmax(const Tensor& logits) {
    std::size_t m = logits.rows(), c = logits.cols();
    Tensor p = Tensor::zeros(logits.shape);
    for (std::size_t i = 0; i < m; ++i) {
        const double* li = &logits.data[i * c];
        double mx = li[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, li[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(li[j] - mx);
        for (std::size_t j = 0; j < c; ++j) p.data[i * c + j] = std::exp(li[j] - mx) / z;
    }
    return p;
}

double softmax_xent_loss(const Tensor& logits, const std::vector<std::uint32_t>& labels, Tensor* d_logits) {
    std::size_t m = logits.rows(), c = logits.cols();
    if (labels.size() != m)
        throw std::runtime_error("label count " + std::to_string(labels.size()) + " does not match batch " +
                                 std::to_string(m));
    for (std::uint32_t y : labels)
        if (y >= c) throw std::runtime_error("label " + std::to_string(y) + " out of range for " +
                                             std::to_string(c) + " classes");
    double total = 0.0;
    if (d_logits) *d_logits = Tensor::zeros(logits.shape);
    for (std::size_t i = 0; i < m; ++i) {
        const double* li = &logits.data[i * c];
        double mx = li[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, li[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(li[j] - mx);
        double logz = mx + std::log(z);
        total += logz - li[labels[i]];
        if (d_logits) {
            double* di = &d_logits->data[i * c];
            for (std::size_t j = 0; j < c; ++j) di[j] = std::exp(li[j] - logz) / static_cast<double>(m);
            di[labels[i]] -= 1.0 / static_cast<double>(m);
        }
    }
    double loss = total / static_cast<double>(m);
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite value in cross-entropy loss");
    return loss;
}

double forward_backward(const Mlp& net, const Batch& batch, Loss loss, ParamSet& grads) {
    MlpCache cache;
    Tensor out = forward(net, batch.inputs, &cache);
    double value = 0.0;
    Tensor d_out;
    switch (loss) {
        case Loss::squared:
            value = squared_loss(out, batch.targets, &d_out);
            break;
        case Loss::softmax_xent:
            value = softmax_xent_loss(out, batch.labels, &d_out);
            break;
        default:
            throw std::runtime_error("unknown loss descriptor");
    }
    backward(net, cache, d_out, grads);
    return value;
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr, double momentum, ParamSet& velocity) {
    if (velocity.empty() && momentum != 0.0) velocity = zeros_like(params);
    for (auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        if (momentum == 0.0) {
            for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] -= lr * g.data[i];
        } else {
            Tensor& v = velocity.at(name);
            for (std::size_t i = 0; i < p.data.size(); ++i) {
                v.data[i] = momentum * v.data[i] + g.data[i];
                p.data[i] -= lr * v.data[i];
            }
        }
    }
}

}  // namespace ibu::nn
