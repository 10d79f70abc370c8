#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ibu/cli.hpp"

namespace {

struct Common {
    std::string config_path;
    bool has_seed = false;
    std::uint64_t seed = 0;
};

ibu::cli::Config effective_config(const Common& common) {
    ibu::cli::Config cfg;
    if (!common.config_path.empty()) cfg = ibu::cli::load_config(common.config_path);
    if (common.has_seed) ibu::cli::apply_seed_override(cfg, common.seed);
    return cfg;
}

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config_path, "key=value config file; defaults used when omitted");
    cmd->add_option("--seed", common.seed, "re-seed every randomized stage from this number")
        ->each([&common](const std::string&) { common.has_seed = true; });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"variational-bottleneck training and blind unlearning toolkit"};
    app.require_subcommand(1);

    Common common;
    std::string out, model_path, request_path, erase_csv;
    std::string unlearned_path, retrained_path;

    CLI::App* train = app.add_subcommand("train", "train a model; writes model, compressor and loss trace");
    add_common(train, common);
    train->add_option("--out", out, "model output path")->required();

    CLI::App* exportc = app.add_subcommand("export-compressor", "strip a model file down to its compressor");
    add_common(exportc, common);
    exportc->add_option("model", model_path, "trained model file")->required();
    exportc->add_option("--out", out, "compressor output path")->required();

    CLI::App* prepare = app.add_subcommand("prepare-request", "mask and encode the erase set; prints epsilon,delta");
    add_common(prepare, common);
    prepare->add_option("compressor", model_path, "compressor checkpoint file")->required();
    prepare->add_option("erase_csv", erase_csv, "erased rows CSV; omit to rebuild the config partition");
    prepare->add_option("--out", out, "request output path")->required();

    CLI::App* unlearn = app.add_subcommand("unlearn", "validate a request and unlearn it from a model");
    add_common(unlearn, common);
    unlearn->add_option("model", model_path, "trained model file")->required();
    unlearn->add_option("request", request_path, "unlearning request file")->required();
    unlearn->add_option("--out", out, "unlearned model output path")->required();

    CLI::App* retrain = app.add_subcommand("retrain-baseline", "retrain from scratch on the remaining set");
    add_common(retrain, common);
    retrain->add_option("model", model_path, "trained model file (architecture reference)")->required();
    retrain->add_option("--out", out, "retrained model output path")->required();

    CLI::App* evaluate = app.add_subcommand("evaluate", "metrics report over original/unlearned/retrained");
    add_common(evaluate, common);
    evaluate->add_option("original", model_path, "original model file")->required();
    evaluate->add_option("unlearned", unlearned_path, "unlearned model file")->required();
    evaluate->add_option("retrained", retrained_path, "retrained model file")->required();
    evaluate->add_option("--out", out, "report CSV path")->required();

    CLI::App* dp = app.add_subcommand("dp-account", "print the feature-sampling privacy budget");
    add_common(dp, common);

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks on all loss gradients");
    add_common(gradcheck, common);

    CLI::App* sweep = app.add_subcommand("sweep", "privacy metrics across beta and sampling-rate grids");
    add_common(sweep, common);
    sweep->add_option("--out", out, "sweep CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ibu::cli::Config cfg = effective_config(common);
        if (train->parsed()) {
            ibu::cli::cmd_train(cfg, out);
        } else if (exportc->parsed()) {
            ibu::cli::cmd_export_compressor(cfg, model_path, out);
        } else if (prepare->parsed()) {
            ibu::cli::cmd_prepare_request(cfg, model_path, erase_csv, out, std::cout);
        } else if (unlearn->parsed()) {
            ibu::cli::cmd_unlearn(cfg, model_path, request_path, out);
        } else if (retrain->parsed()) {
            ibu::cli::cmd_retrain_baseline(cfg, model_path, out);
        } else if (evaluate->parsed()) {
            ibu::cli::cmd_evaluate(cfg, model_path, unlearned_path, retrained_path, out);
        } else if (dp->parsed()) {
            ibu::cli::cmd_dp_account(cfg, std::cout);
        } else if (gradcheck->parsed()) {
            if (!ibu::cli::cmd_gradcheck(cfg, std::cout)) {
                std::cerr << "error: gradient checks failed\n";
                return 1;
            }
        } else if (sweep->parsed()) {
            ibu::cli::cmd_sweep(cfg, out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
