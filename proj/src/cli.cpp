#include "ibu/cli.hpp"

#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include "ibu/evalkit.hpp"
#include "ibu/gradcheck.hpp"
#include "ibu/idx.hpp"
#include "ibu/mine.hpp"
#include "ibu/unlearn.hpp"

namespace ibu::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
    std::string v = trim(value);
    if (v.empty() || v[0] == '-' || v[0] == '+') throw ConfigError(key + ": expected unsigned integer, got '" + value + "'");
    errno = 0;
    char* end = nullptr;
    unsigned long long r = std::strtoull(v.c_str(), &end, 10);
    if (errno != 0 || end != v.c_str() + v.size())
        throw ConfigError(key + ": expected unsigned integer, got '" + value + "'");
    return static_cast<std::uint64_t>(r);
}

double to_double(const std::string& key, const std::string& value) {
    std::string v = trim(value);
    if (v.empty()) throw ConfigError(key + ": expected number, got ''");
    errno = 0;
    char* end = nullptr;
    double r = std::strtod(v.c_str(), &end);
    if (errno != 0 || end != v.c_str() + v.size())
        throw ConfigError(key + ": expected number, got '" + value + "'");
    return r;
}

// Raw key/value lines with consumption tracking; leftovers are unknown keys.
struct Kv {
    std::map<std::string, std::string> raw;
    std::set<std::string> used;

    const std::string* find(const std::string& key) {
        auto it = raw.find(key);
        if (it == raw.end()) return nullptr;
        used.insert(key);
        return &it->second;
    }
};

void get(Kv& kv, const std::string& key, std::string& out) {
    if (const std::string* v = kv.find(key)) out = trim(*v);
}
void get(Kv& kv, const std::string& key, double& out) {
    if (const std::string* v = kv.find(key)) out = to_double(key, *v);
}
void get(Kv& kv, const std::string& key, std::uint64_t& out) {  // also covers size_t here
    if (const std::string* v = kv.find(key)) out = to_u64(key, *v);
}
void get(Kv& kv, const std::string& key, std::uint32_t& out) {
    if (const std::string* v = kv.find(key)) {
        std::uint64_t r = to_u64(key, *v);
        if (r > 0xffffffffull) throw ConfigError(key + ": value does not fit 32 bits");
        out = static_cast<std::uint32_t>(r);
    }
}
void get(Kv& kv, const std::string& key, std::vector<std::size_t>& out) {
    if (const std::string* v = kv.find(key)) {
        out.clear();
        for (const std::string& item : split_list(*v)) out.push_back(static_cast<std::size_t>(to_u64(key, item)));
    }
}
void get(Kv& kv, const std::string& key, std::vector<double>& out) {
    if (const std::string* v = kv.find(key)) {
        out.clear();
        for (const std::string& item : split_list(*v)) out.push_back(to_double(key, item));
    }
}

void require_finite(const std::string& key, double v) {
    if (!std::isfinite(v)) throw ConfigError(key + " must be finite");
}
void require_positive(const std::string& key, double v) {
    require_finite(key, v);
    if (v <= 0.0) throw ConfigError(key + " must be positive");
}
void require_unit_open(const std::string& key, double v) {  // (0, 1)
    require_finite(key, v);
    if (v <= 0.0 || v >= 1.0) throw ConfigError(key + " must lie in (0, 1)");
}
void require_rate(const std::string& key, double v) {  // (0, 1]
    require_finite(key, v);
    if (v <= 0.0 || v > 1.0) throw ConfigError(key + " must lie in (0, 1]");
}
void require_momentum(const std::string& key, double v) {  // [0, 1)
    require_finite(key, v);
    if (v < 0.0 || v >= 1.0) throw ConfigError(key + " must lie in [0, 1)");
}
void require_min(const std::string& key, std::size_t v, std::size_t lo) {
    if (v < lo) throw ConfigError(key + " must be at least " + std::to_string(lo));
}

data::AuxSource parse_aux_source(const std::string& name) {
    if (name == "held_out") return data::AuxSource::held_out;
    if (name == "random_inputs") return data::AuxSource::random_inputs;
    throw ConfigError("partition.aux_source must be held_out or random_inputs, got '" + name + "'");
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out.flush()) throw std::runtime_error("write to '" + path + "' failed");
}

vib::TrainConfig train_config(const Config& cfg) {
    vib::TrainConfig tc;
    tc.epochs = cfg.train.epochs;
    tc.batch_size = cfg.train.batch;
    tc.lr = cfg.train.lr;
    tc.momentum = cfg.train.momentum;
    return tc;
}

evalkit::AttackConfig attack_config(const Config& cfg) {
    evalkit::AttackConfig ac;
    ac.hidden = cfg.eval.attack_hidden;
    ac.epochs = cfg.eval.attack_epochs;
    ac.batch_size = cfg.eval.attack_batch;
    ac.lr = cfg.eval.attack_lr;
    ac.momentum = cfg.eval.attack_momentum;
    return ac;
}

}  // namespace

Config parse_config(const std::string& text) {
    Kv kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!kv.raw.emplace(key, t.substr(eq + 1)).second)
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }

    Config c;
    get(kv, "dataset.kind", c.dataset.kind);
    get(kv, "dataset.classes", c.dataset.classes);
    get(kv, "dataset.per_class", c.dataset.per_class);
    get(kv, "dataset.dim", c.dataset.dim);
    get(kv, "dataset.spread", c.dataset.spread);
    get(kv, "dataset.holdout", c.dataset.holdout);
    get(kv, "dataset.seed", c.dataset.seed);
    get(kv, "dataset.train_csv", c.dataset.train_csv);
    get(kv, "dataset.test_csv", c.dataset.test_csv);
    get(kv, "dataset.train_images", c.dataset.train_images);
    get(kv, "dataset.train_labels", c.dataset.train_labels);
    get(kv, "dataset.test_images", c.dataset.test_images);
    get(kv, "dataset.test_labels", c.dataset.test_labels);

    get(kv, "partition.edr", c.partition.edr);
    get(kv, "partition.aux_source", c.partition.aux_source);
    get(kv, "partition.seed", c.partition.seed);

    get(kv, "backdoor.trigger", c.backdoor.trigger);
    get(kv, "backdoor.value", c.backdoor.value);
    get(kv, "backdoor.target", c.backdoor.target);

    get(kv, "model.compressor_hidden", c.model.compressor_hidden);
    get(kv, "model.latent_dim", c.model.latent_dim);
    get(kv, "model.approximator_hidden", c.model.approximator_hidden);
    get(kv, "model.beta", c.model.beta);
    get(kv, "model.seed", c.model.seed);

    get(kv, "train.epochs", c.train.epochs);
    get(kv, "train.batch", c.train.batch);
    get(kv, "train.lr", c.train.lr);
    get(kv, "train.momentum", c.train.momentum);
    get(kv, "train.seed", c.train.seed);

    get(kv, "mask.sr", c.mask.sr);
    get(kv, "mask.strategy", c.mask.strategy);
    get(kv, "mask.value", c.mask.value);
    get(kv, "mask.mode", c.mask.mode);
    get(kv, "mask.seed", c.mask.seed);

    get(kv, "unlearn.epochs", c.unlearn.epochs);
    get(kv, "unlearn.batch", c.unlearn.batch);
    get(kv, "unlearn.lr", c.unlearn.lr);
    get(kv, "unlearn.momentum", c.unlearn.momentum);
    get(kv, "unlearn.lambda", c.unlearn.lambda);
    get(kv, "unlearn.seed", c.unlearn.seed);
    get(kv, "unlearn.critic_hidden", c.unlearn.critic_hidden);
    get(kv, "unlearn.critic_warmup", c.unlearn.critic_warmup);
    get(kv, "unlearn.critic_inner", c.unlearn.critic_inner);
    get(kv, "unlearn.critic_batch", c.unlearn.critic_batch);
    get(kv, "unlearn.critic_lr", c.unlearn.critic_lr);
    get(kv, "unlearn.critic_momentum", c.unlearn.critic_momentum);
    get(kv, "unlearn.ema", c.unlearn.ema);

    get(kv, "retrain.seed", c.retrain.seed);

    get(kv, "eval.critic_hidden", c.eval.critic_hidden);
    get(kv, "eval.critic_steps", c.eval.critic_steps);
    get(kv, "eval.critic_batch", c.eval.critic_batch);
    get(kv, "eval.critic_lr", c.eval.critic_lr);
    get(kv, "eval.critic_momentum", c.eval.critic_momentum);
    get(kv, "eval.ema", c.eval.ema);
    get(kv, "eval.attack_hidden", c.eval.attack_hidden);
    get(kv, "eval.attack_epochs", c.eval.attack_epochs);
    get(kv, "eval.attack_batch", c.eval.attack_batch);
    get(kv, "eval.attack_lr", c.eval.attack_lr);
    get(kv, "eval.attack_momentum", c.eval.attack_momentum);
    get(kv, "eval.attack_replays", c.eval.attack_replays);
    get(kv, "eval.seed", c.eval.seed);

    get(kv, "sweep.betas", c.sweep.betas);
    get(kv, "sweep.srs", c.sweep.srs);
    get(kv, "sweep.fixed_beta", c.sweep.fixed_beta);
    get(kv, "sweep.fixed_sr", c.sweep.fixed_sr);

    get(kv, "gradcheck.seeds", c.gradcheck.seeds);
    get(kv, "gradcheck.tol", c.gradcheck.tol);
    get(kv, "gradcheck.h", c.gradcheck.h);

    for (const auto& [key, value] : kv.raw)
        if (!kv.used.count(key)) throw ConfigError("unknown key '" + key + "'");

    validate(c);
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void validate(const Config& c) {
    if (c.dataset.kind != "blobs" && c.dataset.kind != "csv" && c.dataset.kind != "idx")
        throw ConfigError("dataset.kind must be blobs, csv or idx, got '" + c.dataset.kind + "'");
    if (c.dataset.kind == "blobs") {
        require_min("dataset.classes", c.dataset.classes, 2);
        require_min("dataset.per_class", c.dataset.per_class, 1);
        require_min("dataset.dim", c.dataset.dim, 1);
        require_positive("dataset.spread", c.dataset.spread);
    }
    require_unit_open("dataset.holdout", c.dataset.holdout);

    require_unit_open("partition.edr", c.partition.edr);
    parse_aux_source(c.partition.aux_source);

    std::set<std::size_t> trig(c.backdoor.trigger.begin(), c.backdoor.trigger.end());
    if (trig.size() != c.backdoor.trigger.size()) throw ConfigError("backdoor.trigger indices must be distinct");
    require_finite("backdoor.value", c.backdoor.value);

    for (std::size_t w : c.model.compressor_hidden)
        if (w == 0) throw ConfigError("model.compressor_hidden widths must be positive");
    for (std::size_t w : c.model.approximator_hidden)
        if (w == 0) throw ConfigError("model.approximator_hidden widths must be positive");
    require_min("model.latent_dim", c.model.latent_dim, 1);
    require_finite("model.beta", c.model.beta);
    if (c.model.beta < 0.0) throw ConfigError("model.beta must be nonnegative");

    require_min("train.batch", c.train.batch, 1);
    require_positive("train.lr", c.train.lr);
    require_momentum("train.momentum", c.train.momentum);

    require_rate("mask.sr", c.mask.sr);
    try {
        masking::parse_strategy(c.mask.strategy);
        protocol::parse_code_mode(c.mask.mode);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("mask: ") + e.what());
    }
    require_finite("mask.value", c.mask.value);

    require_min("unlearn.batch", c.unlearn.batch, 1);
    require_positive("unlearn.lr", c.unlearn.lr);
    require_momentum("unlearn.momentum", c.unlearn.momentum);
    require_finite("unlearn.lambda", c.unlearn.lambda);
    if (c.unlearn.lambda < 0.0 || c.unlearn.lambda > 1.0) throw ConfigError("unlearn.lambda must lie in [0, 1]");
    for (std::size_t w : c.unlearn.critic_hidden)
        if (w == 0) throw ConfigError("unlearn.critic_hidden widths must be positive");
    require_min("unlearn.critic_batch", c.unlearn.critic_batch, 1);
    require_positive("unlearn.critic_lr", c.unlearn.critic_lr);
    require_momentum("unlearn.critic_momentum", c.unlearn.critic_momentum);
    require_momentum("unlearn.ema", c.unlearn.ema);

    for (std::size_t w : c.eval.critic_hidden)
        if (w == 0) throw ConfigError("eval.critic_hidden widths must be positive");
    require_min("eval.critic_steps", c.eval.critic_steps, 1);
    require_min("eval.critic_batch", c.eval.critic_batch, 1);
    require_positive("eval.critic_lr", c.eval.critic_lr);
    require_momentum("eval.critic_momentum", c.eval.critic_momentum);
    require_momentum("eval.ema", c.eval.ema);
    for (std::size_t w : c.eval.attack_hidden)
        if (w == 0) throw ConfigError("eval.attack_hidden widths must be positive");
    require_min("eval.attack_epochs", c.eval.attack_epochs, 1);
    require_min("eval.attack_batch", c.eval.attack_batch, 1);
    require_positive("eval.attack_lr", c.eval.attack_lr);
    require_momentum("eval.attack_momentum", c.eval.attack_momentum);
    require_min("eval.attack_replays", c.eval.attack_replays, 1);

    if (c.sweep.betas.empty()) throw ConfigError("sweep.betas must not be empty");
    for (double b : c.sweep.betas) {
        require_finite("sweep.betas", b);
        if (b < 0.0) throw ConfigError("sweep.betas entries must be nonnegative");
    }
    if (c.sweep.srs.empty()) throw ConfigError("sweep.srs must not be empty");
    for (double s : c.sweep.srs) require_rate("sweep.srs", s);
    require_finite("sweep.fixed_beta", c.sweep.fixed_beta);
    if (c.sweep.fixed_beta < 0.0) throw ConfigError("sweep.fixed_beta must be nonnegative");
    require_rate("sweep.fixed_sr", c.sweep.fixed_sr);

    require_min("gradcheck.seeds", c.gradcheck.seeds, 1);
    require_positive("gradcheck.tol", c.gradcheck.tol);
    require_positive("gradcheck.h", c.gradcheck.h);
}

void apply_seed_override(Config& cfg, std::uint64_t seed) {
    cfg.dataset.seed = seed ^ fnv1a64("data");
    cfg.partition.seed = seed ^ fnv1a64("partition");
    cfg.model.seed = seed ^ fnv1a64("init");
    cfg.train.seed = seed ^ fnv1a64("train");
    cfg.mask.seed = seed ^ fnv1a64("mask");
    cfg.unlearn.seed = seed ^ fnv1a64("unlearn");
    cfg.retrain.seed = seed ^ fnv1a64("retrain");
    cfg.eval.seed = seed ^ fnv1a64("eval");
}

World build_world(const Config& cfg) {
    const DatasetBlock& d = cfg.dataset;
    World w;
    if (d.kind == "blobs") {
        Rng rng(d.seed);
        data::Dataset all = data::synth_blobs(rng, d.classes, d.per_class, d.dim, d.spread);
        auto [rest, hold] = data::split_holdout(all, d.holdout, rng);
        w.train = std::move(rest);
        w.test = std::move(hold);
    } else if (d.kind == "csv") {
        if (d.train_csv.empty()) throw ConfigError("dataset.train_csv is required for kind=csv");
        data::Dataset tr = data::load_csv(d.train_csv);
        if (d.test_csv.empty()) {
            Rng rng(d.seed);
            auto [rest, hold] = data::split_holdout(tr, d.holdout, rng);
            w.train = std::move(rest);
            w.test = std::move(hold);
        } else {
            w.train = std::move(tr);
            w.test = data::load_csv(d.test_csv);
        }
    } else {  // idx
        if (d.train_images.empty() || d.train_labels.empty())
            throw ConfigError("dataset.train_images and dataset.train_labels are required for kind=idx");
        data::Dataset tr = idx::load_idx(d.train_images, d.train_labels);
        if (d.test_images.empty()) {
            Rng rng(d.seed);
            auto [rest, hold] = data::split_holdout(tr, d.holdout, rng);
            w.train = std::move(rest);
            w.test = std::move(hold);
        } else {
            if (d.test_labels.empty()) throw ConfigError("dataset.test_labels is required with dataset.test_images");
            w.train = std::move(tr);
            w.test = idx::load_idx(d.test_images, d.test_labels);
        }
    }
    // file-backed halves can disagree on the observed label range
    std::size_t classes = std::max(w.train.num_classes, w.test.num_classes);
    w.train.num_classes = w.test.num_classes = classes;
    if (w.train.n() != w.test.n()) throw ConfigError("train and test feature counts disagree");

    Rng prng(cfg.partition.seed);
    w.part = data::make_partition(w.train, cfg.partition.edr, parse_aux_source(cfg.partition.aux_source), prng);
    w.part.test = w.test;

    w.backdoored = !cfg.backdoor.trigger.empty();
    if (w.backdoored) {
        for (std::size_t idx : cfg.backdoor.trigger)
            if (idx >= w.train.n()) throw ConfigError("backdoor.trigger index out of range for the dataset");
        if (cfg.backdoor.target >= classes) throw ConfigError("backdoor.target exceeds the label range");
        w.backdoor = data::BackdoorSpec{cfg.backdoor.trigger, cfg.backdoor.value, cfg.backdoor.target};
        std::vector<std::size_t> all(w.part.erased.m());
        std::iota(all.begin(), all.end(), std::size_t{0});
        w.erased_bd = data::inject_backdoor(w.part.erased, w.backdoor, all);
    } else {
        w.erased_bd = w.part.erased;
    }
    w.fit_set = data::concat(w.part.remaining, w.erased_bd);
    return w;
}

vib::VibModel init_model(const Config& cfg, std::size_t n_features, std::size_t n_classes) {
    Rng rng(cfg.model.seed);
    return vib::make_model(n_features, cfg.model.compressor_hidden, cfg.model.latent_dim,
                           cfg.model.approximator_hidden, n_classes, cfg.model.beta, rng);
}

masking::MaskSpec mask_spec(const Config& cfg, std::size_t n_features) {
    return masking::MaskSpec{n_features, cfg.mask.sr, masking::parse_strategy(cfg.mask.strategy),
                             cfg.mask.value};
}

namespace {

std::string with_suffix(const std::string& path, const std::string& suffix) {
    const std::string ext = ".bldu";
    if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0)
        return path.substr(0, path.size() - ext.size()) + suffix;
    return path + suffix;
}

}  // namespace

std::string compressor_path_for(const std::string& model_path) {
    return with_suffix(model_path, ".compressor.bldu");
}

std::string trace_path_for(const std::string& model_path) {
    return with_suffix(model_path, ".trace.csv");
}

void cmd_train(const Config& cfg, const std::string& out_model) {
    World w = build_world(cfg);
    vib::VibModel model = init_model(cfg, w.train.n(), w.train.num_classes);
    Rng trng(cfg.train.seed);
    std::vector<double> trace = vib::train(model, w.fit_set, train_config(cfg), trng);

    protocol::save_model(out_model, model, cfg.model.seed);
    protocol::save_compressor(compressor_path_for(out_model),
                              protocol::strip_to_compressor(model, cfg.model.seed));

    std::string csv = "epoch,loss\n";
    for (std::size_t i = 0; i < trace.size(); ++i)
        csv += std::to_string(i) + "," + fmt17(trace[i]) + "\n";
    write_text(trace_path_for(out_model), csv);
}

void cmd_export_compressor(const Config& cfg, const std::string& model_path, const std::string& out) {
    vib::VibModel model = protocol::load_model(model_path);
    protocol::save_compressor(out, protocol::strip_to_compressor(model, cfg.model.seed));
}

void cmd_prepare_request(const Config& cfg, const std::string& compressor_path,
                         const std::string& erase_csv, const std::string& out, std::ostream& msg) {
    protocol::CompressorCheckpoint cp = protocol::load_compressor(compressor_path);
    data::Dataset erased;
    if (erase_csv.empty()) {
        erased = build_world(cfg).erased_bd;
    } else {
        erased = data::load_csv(erase_csv);
    }
    if (erased.empty()) throw std::runtime_error("erase set is empty");
    if (erased.n() != cp.widths.front())
        throw std::runtime_error("erase set feature count does not match the compressor");

    masking::MaskSpec ms = mask_spec(cfg, erased.n());
    Rng mrng(cfg.mask.seed);
    protocol::UnlearningRequest req = protocol::prepare_request(
        cp, erased.inputs, erased.labels, ms, protocol::parse_code_mode(cfg.mask.mode), mrng);
    protocol::save_request(out, req);
    msg << "epsilon,delta\n" << fmt17(req.dp.epsilon) << "," << fmt17(req.dp.delta) << "\n";
}

void cmd_unlearn(const Config& cfg, const std::string& model_path, const std::string& request_path,
                 const std::string& out) {
    vib::VibModel model = protocol::load_model(model_path);
    protocol::UnlearningRequest req = protocol::load_request(request_path);
    protocol::Validation v = protocol::validate_request(req, model);
    if (!v) throw std::runtime_error("request rejected: " + v.reason);

    World w = build_world(cfg);
    if (w.part.auxiliary.m() != req.z_e.rows())
        throw std::runtime_error("auxiliary set size does not match the request");

    unlearn::UnlearnConfig uc;
    uc.epochs = cfg.unlearn.epochs;
    uc.batch_size = cfg.unlearn.batch;
    uc.lr = cfg.unlearn.lr;
    uc.momentum = cfg.unlearn.momentum;
    uc.lambda = cfg.unlearn.lambda;
    uc.seed = cfg.unlearn.seed;
    uc.critic_hidden = cfg.unlearn.critic_hidden;
    uc.critic_warmup_steps = cfg.unlearn.critic_warmup;
    uc.critic_inner_steps = cfg.unlearn.critic_inner;
    uc.critic_batch = cfg.unlearn.critic_batch;
    uc.critic_lr = cfg.unlearn.critic_lr;
    uc.critic_momentum = cfg.unlearn.critic_momentum;
    uc.ema_decay = cfg.unlearn.ema;

    unlearn::ForgetBatch fb{req.z_e, req.y_e};
    unlearn::UnlearnResult res = unlearn::run(model, fb, w.part.auxiliary, uc);
    protocol::save_model(out, res.model, cfg.unlearn.seed);
    unlearn::save_trace_csv(res.trace, trace_path_for(out));
}

void cmd_retrain_baseline(const Config& cfg, const std::string& model_path, const std::string& out) {
    vib::VibModel model = protocol::load_model(model_path);
    World w = build_world(cfg);
    Rng rrng(cfg.retrain.seed);
    vib::VibModel fresh = unlearn::retrain_baseline(model, w.part.remaining, train_config(cfg), rrng);
    protocol::save_model(out, fresh, cfg.retrain.seed);
}

void cmd_evaluate(const Config& cfg, const std::string& original_path, const std::string& unlearned_path,
                  const std::string& retrained_path, const std::string& out_csv) {
    vib::VibModel original = protocol::load_model(original_path);
    vib::VibModel unlearned = protocol::load_model(unlearned_path);
    vib::VibModel retrained = protocol::load_model(retrained_path);

    World w = build_world(cfg);
    if (!w.backdoored) throw std::runtime_error("evaluate needs a backdoor.trigger in the config");

    evalkit::ProbeSpec probe;
    probe.mask = mask_spec(cfg, w.train.n());
    probe.critic_hidden = cfg.eval.critic_hidden;
    probe.critic_steps = cfg.eval.critic_steps;
    probe.critic_batch = cfg.eval.critic_batch;
    probe.critic_lr = cfg.eval.critic_lr;
    probe.critic_momentum = cfg.eval.critic_momentum;
    probe.ema_decay = cfg.eval.ema;
    probe.attack = attack_config(cfg);

    Rng erng(cfg.eval.seed);
    std::vector<evalkit::MetricsReport> rows =
        evalkit::full_report(original, unlearned, retrained, w.part, w.backdoor, probe, erng);
    evalkit::save_report_csv(out_csv, rows);
}

void cmd_dp_account(const Config& cfg, std::ostream& out) {
    masking::MaskSpec ms = mask_spec(cfg, cfg.dataset.dim);
    masking::DpAccount acc = masking::account(ms);
    out << "epsilon,delta\n" << fmt17(acc.epsilon) << "," << fmt17(acc.delta) << "\n";
}

namespace {

// One combined parameter set over both halves of the model so a single
// finite-difference pass covers every weight.
FdReport check_ib_loss(std::uint64_t seed, double h, double tol) {
    Rng rng(seed);
    vib::VibModel m = vib::make_model(5, {6}, 3, {6}, 3, 0.21, rng);
    Tensor x = gaussian(rng, {4, 5});
    std::vector<std::uint32_t> y{0, 1, 2, 1};
    Tensor eps = gaussian(rng, {4, 3});

    ParamSet cgrads, agrads;
    vib::ib_loss_with_noise(m, x, y, eps, &cgrads, &agrads);
    ParamSet combined, combined_grads;
    for (const auto& [k, t] : m.compressor.params) combined.emplace("c." + k, t);
    for (const auto& [k, t] : m.approximator.params) combined.emplace("a." + k, t);
    for (const auto& [k, t] : cgrads) combined_grads.emplace("c." + k, t);
    for (const auto& [k, t] : agrads) combined_grads.emplace("a." + k, t);

    vib::VibModel probe = m;
    auto f = [&](const ParamSet& p) {
        for (auto& [k, t] : probe.compressor.params) t = p.at("c." + k);
        for (auto& [k, t] : probe.approximator.params) t = p.at("a." + k);
        return vib::ib_loss_with_noise(probe, x, y, eps, nullptr, nullptr).total;
    };
    return finite_difference_check(f, combined, combined_grads, h, tol);
}

FdReport check_dv_loss(std::uint64_t seed, double h, double tol) {
    Rng rng(seed);
    mine::StatNet s = mine::make_statnet(2, {8, 8}, rng);
    Tensor ze = gaussian(rng, {5, 2}), za = gaussian(rng, {5, 2});
    std::vector<std::size_t> perm{4, 3, 2, 1, 0};
    mine::MiLossGrads g = mine::mi_loss_for_unlearning(s, ze, za, perm);

    ParamSet args, grads;
    args.emplace("ze", ze);
    args.emplace("za", za);
    grads.emplace("ze", g.d_first);
    grads.emplace("za", g.d_second);
    auto f = [&](const ParamSet& p) { return mine::mi_loss_for_unlearning(s, p.at("ze"), p.at("za"), perm).value; };
    return finite_difference_check(f, args, grads, h, tol);
}

FdReport check_forget_loss(std::uint64_t seed, double h, double tol) {
    Rng rng(seed);
    std::size_t d = 2, c = 3, m = 6, n = 4;
    vib::VibModel model = vib::make_model(n, {5}, d, {4}, c, 0.0, rng);
    mine::StatNet critic = mine::make_statnet(d, {6}, rng);
    unlearn::ForgetBatch fb{gaussian(rng, {m, d}), {0, 1, 2, 0, 1, 2}};
    Tensor aux = gaussian(rng, {m, n});
    Tensor eps = gaussian(rng, {m, d});
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle_indices(rng, perm);
    double lambda = 0.6;

    ParamSet cg, ag;
    unlearn::forget_loss_with_noise(model, critic, fb, aux, eps, perm, lambda, &cg, &ag);
    ParamSet cfull = zeros_like(model.compressor.params);
    ParamSet afull = zeros_like(model.approximator.params);
    axpy_params(cfull, cg, 1.0);
    axpy_params(afull, ag, 1.0);

    ParamSet combined, combined_grads;
    for (const auto& [k, t] : model.compressor.params) combined.emplace("c." + k, t);
    for (const auto& [k, t] : model.approximator.params) combined.emplace("a." + k, t);
    for (const auto& [k, t] : cfull) combined_grads.emplace("c." + k, t);
    for (const auto& [k, t] : afull) combined_grads.emplace("a." + k, t);

    vib::VibModel probe = model;
    auto f = [&](const ParamSet& p) {
        for (auto& [k, t] : probe.compressor.params) t = p.at("c." + k);
        for (auto& [k, t] : probe.approximator.params) t = p.at("a." + k);
        return unlearn::forget_loss_with_noise(probe, critic, fb, aux, eps, perm, lambda, nullptr, nullptr)
            .total;
    };
    return finite_difference_check(f, combined, combined_grads, h, tol);
}

}  // namespace

bool cmd_gradcheck(const Config& cfg, std::ostream& out) {
    struct Family {
        const char* name;
        FdReport (*run)(std::uint64_t, double, double);
    };
    const Family families[] = {
        {"ib_loss", check_ib_loss}, {"dv_loss", check_dv_loss}, {"forget_loss", check_forget_loss}};

    out << "check,seed,max_rel_err,pass\n";
    bool all = true;
    for (const Family& fam : families) {
        for (std::uint64_t seed = 0; seed < cfg.gradcheck.seeds; ++seed) {
            FdReport r = fam.run(seed, cfg.gradcheck.h, cfg.gradcheck.tol);
            all = all && r.pass;
            out << fam.name << "," << seed << "," << fmt17(r.max_rel_err) << "," << (r.pass ? 1 : 0)
                << "\n";
        }
    }
    return all;
}

void cmd_sweep(const Config& cfg, const std::string& out_csv) {
    World w = build_world(cfg);

    std::vector<std::pair<double, double>> points;  // (beta, sr)
    auto push_unique = [&](double beta, double sr) {
        for (const auto& p : points)
            if (p.first == beta && p.second == sr) return;
        points.emplace_back(beta, sr);
    };
    for (double b : cfg.sweep.betas) push_unique(b, cfg.sweep.fixed_sr);
    for (double s : cfg.sweep.srs) push_unique(cfg.sweep.fixed_beta, s);

    std::string csv = "beta,sr,test_acc,kl_upper,ce_lower,phi,recon_mse\n";
    for (const auto& [beta, sr] : points) {
        Config point = cfg;
        point.model.beta = beta;
        point.mask.sr = sr;

        vib::VibModel model = init_model(point, w.train.n(), w.train.num_classes);
        Rng trng(point.train.seed);
        vib::train(model, w.train, train_config(point), trng);

        Rng erng(point.eval.seed);
        evalkit::PrivacyDescriptor pd = evalkit::dual_privacy_descriptor(model, w.test, erng);

        // The inverter trains on everything the server still holds and is
        // scored on the handed-over rows it never saw. It knows the masking
        // mechanism, so it simulates several mask draws per training row to
        // marginalize the mask pattern out.
        masking::MaskSpec ms = mask_spec(point, w.train.n());
        Rng mrng(point.mask.seed);
        const std::size_t replays = point.eval.attack_replays;
        std::size_t rm = w.part.remaining.m(), rn = w.train.n();
        Tensor rem_inputs = Tensor::zeros({replays * rm, rn});
        Tensor rem_codes = Tensor::zeros({replays * rm, point.model.latent_dim});
        for (std::size_t r = 0; r < replays; ++r) {
            Tensor masked =
                masking::masked_values(masking::mask_batch(w.part.remaining.inputs, ms, mrng));
            Tensor codes = vib::encode(model, masked).mean;
            for (std::size_t i = 0; i < rm; ++i) {
                for (std::size_t j = 0; j < rn; ++j)
                    rem_inputs.at(r * rm + i, j) = w.part.remaining.inputs.at(i, j);
                for (std::size_t j = 0; j < point.model.latent_dim; ++j)
                    rem_codes.at(r * rm + i, j) = codes.at(i, j);
            }
        }
        Tensor masked_erased = masking::masked_values(masking::mask_batch(w.part.erased.inputs, ms, mrng));
        Tensor codes_erased = vib::encode(model, masked_erased).mean;
        double mse = evalkit::reconstruction_attack(rem_codes, rem_inputs, codes_erased,
                                                    w.part.erased.inputs, attack_config(point), erng);

        csv += fmt17(beta) + "," + fmt17(sr) + "," + fmt17(vib::accuracy(model, w.test)) + "," +
               fmt17(pd.kl_upper) + "," + fmt17(pd.ce_lower) + "," + fmt17(pd.phi) + "," + fmt17(mse) +
               "\n";
    }
    write_text(out_csv, csv);
}

}  // namespace ibu::cli
