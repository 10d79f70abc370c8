#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"

namespace ibu::data {

struct Dataset {
    Tensor inputs;                      // m x n, values in [0,1]
    std::vector<std::uint32_t> labels;  // length m, values in [0, num_classes)
    std::size_t num_classes = 0;

    std::size_t m() const { return inputs.rank() == 2 ? inputs.rows() : 0; }
    std::size_t n() const { return inputs.rank() == 2 ? inputs.cols() : 0; }
    bool empty() const { return m() == 0; }
};

void validate(const Dataset& ds);

// remaining/erased partition of a training set plus the server-side auxiliary
// stand-in (|auxiliary| == |erased|). `test` stays empty here; pipelines that
// carved a holdout set fill it in.
struct Partition {
    Dataset remaining;
    Dataset erased;
    Dataset auxiliary;
    Dataset test;
    std::vector<std::size_t> erased_rows;  // indices into the original train set
};

enum class AuxSource : std::uint8_t { held_out, random_inputs };

struct BackdoorSpec {
    std::vector<std::size_t> trigger_indices;
    double trigger_value = 1.0;
    std::uint32_t target_label = 0;
};

// Default trigger: the first ceil(n/16) feature indices at value 1.0, target 0.
BackdoorSpec default_backdoor(std::size_t n_features);

// Gaussian class clusters with means kept pairwise >= 4*spread apart, inputs
// clipped to [0,1]. Rows are ordered class by class.
Dataset synth_blobs(Rng& rng, std::size_t classes, std::size_t per_class, std::size_t dim, double spread);

Dataset select_rows(const Dataset& ds, const std::vector<std::size_t>& rows);
Dataset concat(const Dataset& a, const Dataset& b);

// Carves `fraction` of rows (round half-up, at least 1 each side) into a
// holdout set; returns (rest, holdout).
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction, Rng& rng);

// |erased| = round_half_up(edr * m); auxiliary drawn per `source`. Erased and
// auxiliary row-index sets are disjoint; erased rows are removed from
// `remaining` (held-out auxiliary rows are not — they stand in for retained
// data the server still holds).
Partition make_partition(const Dataset& train, double edr, AuxSource source, Rng& rng);

Dataset inject_backdoor(const Dataset& ds, const BackdoorSpec& spec, const std::vector<std::size_t>& rows);

std::size_t round_half_up(double x);

// CSV with header f0,...,f{n-1},label; >= 9 significant digits per value.
void save_csv(const Dataset& ds, const std::string& path);
Dataset load_csv(const std::string& path);

}  // namespace ibu::data
