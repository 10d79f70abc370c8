#include "ibu/tensor.hpp"

#include <cmath>
#include <sstream>

namespace ibu {

std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
        throw std::runtime_error("tensor shape " + shape_str(shape) + " does not match data length " +
                                 std::to_string(data.size()));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw std::runtime_error("expected rank-2 tensor, got shape " + shape_str(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::runtime_error("expected rank-2 tensor, got shape " + shape_str(shape));
    return shape[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
    return data[i * cols() + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    return data[i * cols() + j];
}

void check_finite(const Tensor& t, const std::string& what) {
    for (double v : t.data)
        if (!std::isfinite(v)) throw std::runtime_error("non-finite value in " + what);
}

std::size_t total_size(const ParamSet& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.size();
    return n;
}

std::vector<double> flatten(const ParamSet& params) {
    std::vector<double> flat;
    flat.reserve(total_size(params));
    for (const auto& [name, t] : params) flat.insert(flat.end(), t.data.begin(), t.data.end());
    return flat;
}

void unflatten_into(ParamSet& params, const std::vector<double>& flat) {
    if (flat.size() != total_size(params))
        throw std::runtime_error("flat vector length " + std::to_string(flat.size()) +
                                 " does not match parameter count " + std::to_string(total_size(params)));
    std::size_t off = 0;
    for (auto& [name, t] : params) {
        std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.data.begin());
        off += t.size();
    }
}

void axpy_params(ParamSet& acc, const ParamSet& delta, double scale) {
    for (auto& [name, t] : acc) {
        auto it = delta.find(name);
        if (it == delta.end())
            throw std::runtime_error("parameter " + name + " missing from delta set");
        if (!t.same_shape(it->second))
            throw std::runtime_error("parameter " + name + " shape mismatch in axpy");
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += scale * it->second.data[i];
    }
}

ParamSet zeros_like(const ParamSet& params) {
    ParamSet out;
    for (const auto& [name, t] : params) out.emplace(name, Tensor::zeros(t.shape));
    return out;
}

}  // namespace ibu
