#include "ibu/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ibu::data {

void validate(const Dataset& ds) {
    if (ds.inputs.rank() != 2) throw std::runtime_error("dataset inputs must be rank 2");
    if (ds.m() < 1 || ds.n() < 1) throw std::runtime_error("dataset must have at least one row and feature");
    if (ds.num_classes < 2) throw std::runtime_error("dataset needs at least 2 classes");
    if (ds.labels.size() != ds.m()) throw std::runtime_error("label count does not match row count");
    for (std::uint32_t y : ds.labels)
        if (y >= ds.num_classes) throw std::runtime_error("label " + std::to_string(y) + " out of range");
    for (double v : ds.inputs.data)
        if (!(v >= 0.0 && v <= 1.0)) throw std::runtime_error("dataset inputs must lie in [0,1]");
}

BackdoorSpec default_backdoor(std::size_t n_features) {
    BackdoorSpec spec;
    std::size_t k = (n_features + 15) / 16;
    for (std::size_t i = 0; i < k; ++i) spec.trigger_indices.push_back(i);
    spec.trigger_value = 1.0;
    spec.target_label = 0;
    return spec;
}

std::size_t round_half_up(double x) {
    if (x < 0.0) throw std::runtime_error("round_half_up expects a nonnegative value");
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

Dataset synth_blobs(Rng& rng, std::size_t classes, std::size_t per_class, std::size_t dim, double spread) {
    if (classes < 2) throw std::runtime_error("synth_blobs needs at least 2 classes");
    if (per_class < 1) throw std::runtime_error("synth_blobs needs at least 1 row per class");
    if (dim < 4) throw std::runtime_error("synth_blobs needs dim >= 4");
    if (!(spread >= 0.0)) throw std::runtime_error("spread must be nonnegative");

    // Means live in [0.15, 0.85]^dim so that +-3 spreads rarely clip; redraw
    // until every pair is at least 4*spread apart.
    std::vector<std::vector<double>> means;
    const double min_sep = 4.0 * spread;
    for (std::size_t c = 0; c < classes; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            std::vector<double> mu(dim);
            for (double& v : mu) v = 0.15 + 0.70 * rng.uniform();
            placed = true;
            for (const auto& other : means) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < dim; ++j) d2 += (mu[j] - other[j]) * (mu[j] - other[j]);
                if (std::sqrt(d2) < min_sep) {
                    placed = false;
                    break;
                }
            }
            if (placed) means.push_back(std::move(mu));
        }
        if (!placed)
            throw std::runtime_error("could not separate " + std::to_string(classes) +
                                     " class means by 4*spread; lower the spread");
    }

    Dataset ds;
    ds.num_classes = classes;
    ds.inputs = Tensor::zeros({classes * per_class, dim});
    ds.labels.resize(classes * per_class);
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            std::size_t row = c * per_class + i;
            ds.labels[row] = static_cast<std::uint32_t>(c);
            for (std::size_t j = 0; j < dim; ++j) {
                double v = means[c][j] + spread * rng.normal();
                ds.inputs.at(row, j) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return ds;
}

Dataset select_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.inputs = Tensor::zeros({rows.size(), ds.n()});
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= ds.m()) throw std::runtime_error("row index " + std::to_string(rows[i]) + " out of range");
        for (std::size_t j = 0; j < ds.n(); ++j) out.inputs.at(i, j) = ds.inputs.at(rows[i], j);
        out.labels[i] = ds.labels[rows[i]];
    }
    return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.n() != b.n() || a.num_classes != b.num_classes)
        throw std::runtime_error("cannot concatenate datasets with different feature counts or classes");
    Dataset out;
    out.num_classes = a.num_classes;
    out.inputs = Tensor::zeros({a.m() + b.m(), a.n()});
    std::copy(a.inputs.data.begin(), a.inputs.data.end(), out.inputs.data.begin());
    std::copy(b.inputs.data.begin(), b.inputs.data.end(), out.inputs.data.begin() + a.inputs.data.size());
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double fraction, Rng& rng) {
    validate(ds);
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::runtime_error("holdout fraction must be in (0,1)");
    std::size_t k = round_half_up(fraction * static_cast<double>(ds.m()));
    if (k == 0 || k >= ds.m()) throw std::runtime_error("holdout split leaves an empty side");
    auto held = uniform_indices(rng, ds.m(), k, false);
    std::sort(held.begin(), held.end());
    std::vector<std::size_t> rest;
    std::set<std::size_t> held_set(held.begin(), held.end());
    for (std::size_t i = 0; i < ds.m(); ++i)
        if (!held_set.count(i)) rest.push_back(i);
    return {select_rows(ds, rest), select_rows(ds, held)};
}

Partition make_partition(const Dataset& train, double edr, AuxSource source, Rng& rng) {
    validate(train);
    if (!(edr > 0.0 && edr < 0.5)) throw std::runtime_error("erasing ratio must be in (0, 0.5)");
    std::size_t m = train.m();
    std::size_t k = round_half_up(edr * static_cast<double>(m));
    if (k == 0) throw std::runtime_error("erasing ratio selects zero rows");

    auto erased_rows = uniform_indices(rng, m, k, false);
    std::sort(erased_rows.begin(), erased_rows.end());
    std::set<std::size_t> erased_set(erased_rows.begin(), erased_rows.end());
    std::vector<std::size_t> remaining_rows;
    for (std::size_t i = 0; i < m; ++i)
        if (!erased_set.count(i)) remaining_rows.push_back(i);

    Partition part;
    part.erased_rows = erased_rows;
    part.erased = select_rows(train, erased_rows);
    part.remaining = select_rows(train, remaining_rows);

    if (source == AuxSource::held_out) {
        if (remaining_rows.size() < k)
            throw std::runtime_error("not enough remaining rows to draw a held-out auxiliary set");
        auto pick = uniform_indices(rng, remaining_rows.size(), k, false);
        std::vector<std::size_t> aux_rows;
        for (std::size_t p : pick) aux_rows.push_back(remaining_rows[p]);
        std::sort(aux_rows.begin(), aux_rows.end());
        part.auxiliary = select_rows(train, aux_rows);
    } else {
        Dataset aux;
        aux.num_classes = train.num_classes;
        aux.inputs = Tensor::zeros({k, train.n()});
        for (double& v : aux.inputs.data) v = rng.uniform();
        aux.labels.resize(k);
        for (std::size_t i = 0; i < k; ++i)
            aux.labels[i] = static_cast<std::uint32_t>(i % train.num_classes);
        part.auxiliary = std::move(aux);
    }
    return part;
}

Dataset inject_backdoor(const Dataset& ds, const BackdoorSpec& spec, const std::vector<std::size_t>& rows) {
    validate(ds);
    std::set<std::size_t> distinct(spec.trigger_indices.begin(), spec.trigger_indices.end());
    if (distinct.size() != spec.trigger_indices.size())
        throw std::runtime_error("trigger indices must be distinct");
    for (std::size_t j : spec.trigger_indices)
        if (j >= ds.n()) throw std::runtime_error("trigger index " + std::to_string(j) + " out of range");
    if (!(spec.trigger_value >= 0.0 && spec.trigger_value <= 1.0))
        throw std::runtime_error("trigger value must lie in [0,1]");
    if (spec.target_label >= ds.num_classes) throw std::runtime_error("target label out of range");

    Dataset out = ds;
    for (std::size_t r : rows) {
        if (r >= ds.m()) throw std::runtime_error("backdoor row " + std::to_string(r) + " out of range");
        for (std::size_t j : spec.trigger_indices) out.inputs.at(r, j) = spec.trigger_value;
        out.labels[r] = spec.target_label;
    }
    return out;
}

void save_csv(const Dataset& ds, const std::string& path) {
    validate(ds);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    for (std::size_t j = 0; j < ds.n(); ++j) f << "f" << j << ",";
    f << "label\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.m(); ++i) {
        for (std::size_t j = 0; j < ds.n(); ++j) {
            std::snprintf(buf, sizeof buf, "%.12g", ds.inputs.at(i, j));
            f << buf << ",";
        }
        f << ds.labels[i] << "\n";
    }
    if (!f) throw std::runtime_error("failed writing " + path);
}

Dataset load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
    std::size_t n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',') );
    if (n == 0 || line.rfind("f0,", 0) != 0)
        throw std::runtime_error(path + ": expected header f0,...,label");

    std::vector<double> values;
    std::vector<std::uint32_t> labels;
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::getline(ss, cell, ',')) throw std::runtime_error(path + ": short row " + std::to_string(rows));
            values.push_back(std::stod(cell));
        }
        if (!std::getline(ss, cell, ',')) throw std::runtime_error(path + ": missing label in row " + std::to_string(rows));
        labels.push_back(static_cast<std::uint32_t>(std::stoul(cell)));
        ++rows;
    }
    Dataset ds;
    ds.inputs = Tensor({rows, n}, std::move(values));
    ds.labels = std::move(labels);
    std::uint32_t max_label = 0;
    for (std::uint32_t y : ds.labels) max_label = std::max(max_label, y);
    ds.num_classes = std::max<std::size_t>(2, max_label + 1);
    validate(ds);
    return ds;
}

}  // namespace ibu::data
