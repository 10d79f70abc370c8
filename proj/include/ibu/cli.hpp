#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ibu/data.hpp"
#include "ibu/masking.hpp"
#include "ibu/protocol.hpp"
#include "ibu/vib.hpp"

namespace ibu::cli {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Flat `section.key=value` text config. Every key has a default; a missing
// file section keeps its defaults, an unknown key is an error. Lists are
// comma-separated, the empty string is the empty list.
struct DatasetBlock {
    std::string kind = "blobs";  // blobs | csv | idx
    // synthetic blobs
    std::size_t classes = 4;
    std::size_t per_class = 250;
    std::size_t dim = 16;
    double spread = 0.05;
    double holdout = 0.2;  // test fraction carved off the generated set
    std::uint64_t seed = 42;
    // file-backed kinds; csv without test_csv carves the holdout instead
    std::string train_csv, test_csv;
    std::string train_images, train_labels, test_images, test_labels;
};

struct PartitionBlock {
    double edr = 0.06;  // erased-data ratio of the training set
    std::string aux_source = "random_inputs";  // held_out | random_inputs
    std::uint64_t seed = 7;
};

struct BackdoorBlock {
    std::vector<std::size_t> trigger{0, 1, 2, 3};  // empty => clean pipeline
    double value = 1.0;
    std::uint32_t target = 3;
};

struct ModelBlock {
    std::vector<std::size_t> compressor_hidden{32};
    std::size_t latent_dim = 6;
    std::vector<std::size_t> approximator_hidden{32};
    double beta = 1e-3;
    std::uint64_t seed = 10;  // weight init
};

struct TrainBlock {
    std::size_t epochs = 30;
    std::size_t batch = 20;
    double lr = 0.05;
    double momentum = 0.0;
    std::uint64_t seed = 11;
};

struct MaskBlock {
    double sr = 0.6;  // fraction of features revealed
    std::string strategy = "without_replacement";
    double value = 0.5;  // written at hidden coordinates
    std::string mode = "mean-code";  // mean-code | sampled
    std::uint64_t seed = 12;
};

struct UnlearnBlock {
    std::size_t epochs = 20;
    std::size_t batch = 8;
    double lr = 0.015;
    double momentum = 0.0;
    double lambda = 0.5;
    std::uint64_t seed = 1;
    std::vector<std::size_t> critic_hidden{64, 64};
    std::size_t critic_warmup = 200;
    std::size_t critic_inner = 2;
    std::size_t critic_batch = 48;
    double critic_lr = 0.002;
    double critic_momentum = 0.9;
    double ema = 0.99;
};

struct RetrainBlock {
    std::uint64_t seed = 13;
};

struct EvalBlock {
    std::vector<std::size_t> critic_hidden{32, 32};
    std::size_t critic_steps = 300;
    std::size_t critic_batch = 64;
    double critic_lr = 1e-2;
    double critic_momentum = 0.9;
    double ema = 0.99;
    std::vector<std::size_t> attack_hidden{32};
    std::size_t attack_epochs = 150;
    std::size_t attack_batch = 16;
    double attack_lr = 0.05;
    double attack_momentum = 0.9;
    std::size_t attack_replays = 4;  // simulated mask draws per row in the inversion attack
    std::uint64_t seed = 9;
};

struct SweepBlock {
    std::vector<double> betas{1e-4, 1e-2, 1.0};
    std::vector<double> srs{0.2, 0.6, 1.0};
    double fixed_beta = 1e-2;
    double fixed_sr = 0.6;
};

struct GradcheckBlock {
    std::size_t seeds = 20;
    double tol = 1e-4;
    double h = 1e-5;
};

struct Config {
    DatasetBlock dataset;
    PartitionBlock partition;
    BackdoorBlock backdoor;
    ModelBlock model;
    TrainBlock train;
    MaskBlock mask;
    UnlearnBlock unlearn;
    RetrainBlock retrain;
    EvalBlock eval;
    SweepBlock sweep;
    GradcheckBlock gradcheck;
};

// Strict parse: duplicate or unknown keys and malformed or out-of-range
// values all throw ConfigError. '#' starts a comment, blank lines are ok.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);
void validate(const Config& cfg);

// Re-seeds every randomized stage from one number: stage seed =
// seed XOR FNV-1a64(stage tag), tags "data", "partition", "train", "mask",
// "unlearn", "retrain", "eval". Explicit per-stage config seeds are
// otherwise used as-is.
void apply_seed_override(Config& cfg, std::uint64_t seed);

// Deterministic data pipeline shared by the commands: dataset, holdout
// split, erased/auxiliary partition, optional trigger on the erased rows.
struct World {
    data::Dataset train;      // post-holdout training set, untouched
    data::Dataset test;
    data::Partition part;     // .test filled from the holdout
    data::BackdoorSpec backdoor;
    bool backdoored = false;
    data::Dataset erased_bd;  // erased rows as handed over (triggered when backdoored)
    data::Dataset fit_set;    // what `train` fits: remaining + erased_bd
};
World build_world(const Config& cfg);

vib::VibModel init_model(const Config& cfg, std::size_t n_features, std::size_t n_classes);
masking::MaskSpec mask_spec(const Config& cfg, std::size_t n_features);

// model path -> sibling artifact paths written by cmd_train
std::string compressor_path_for(const std::string& model_path);
std::string trace_path_for(const std::string& model_path);

void cmd_train(const Config& cfg, const std::string& out_model);
void cmd_export_compressor(const Config& cfg, const std::string& model_path, const std::string& out);
// erase_csv empty => erased rows rebuilt from the config partition
void cmd_prepare_request(const Config& cfg, const std::string& compressor_path,
                         const std::string& erase_csv, const std::string& out, std::ostream& msg);
void cmd_unlearn(const Config& cfg, const std::string& model_path, const std::string& request_path,
                 const std::string& out);
void cmd_retrain_baseline(const Config& cfg, const std::string& model_path, const std::string& out);
void cmd_evaluate(const Config& cfg, const std::string& original_path, const std::string& unlearned_path,
                  const std::string& retrained_path, const std::string& out_csv);
void cmd_dp_account(const Config& cfg, std::ostream& out);
bool cmd_gradcheck(const Config& cfg, std::ostream& out);  // false when any check fails
void cmd_sweep(const Config& cfg, const std::string& out_csv);

}  // namespace ibu::cli
