#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ibu {

// Dense row-major tensor of 64-bit reals. The single numeric carrier for
// inputs, activations, parameters and gradients.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-d accessors; throw if the tensor is not rank 2.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::size_t numel(const std::vector<std::size_t>& shape);

// Throws std::runtime_error naming `what` if any entry is NaN/Inf.
void check_finite(const Tensor& t, const std::string& what);

std::string shape_str(const std::vector<std::size_t>& shape);

// Named parameter collection. std::map gives the deterministic lexicographic
// iteration order that flatten/unflatten and serialization rely on.
using ParamSet = std::map<std::string, Tensor>;

std::size_t total_size(const ParamSet& params);
std::vector<double> flatten(const ParamSet& params);
// Writes `flat` back into `params` (same names/shapes); lossless round trip.
void unflatten_into(ParamSet& params, const std::vector<double>& flat);

// grads += scale * delta, matching names/shapes entrywise.
void axpy_params(ParamSet& acc, const ParamSet& delta, double scale);
ParamSet zeros_like(const ParamSet& params);

}  // namespace ibu
