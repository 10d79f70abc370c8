#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ibu/cli.hpp"
#include "ibu/evalkit.hpp"
#include "ibu/masking.hpp"
#include "ibu/protocol.hpp"
#include "ibu/unlearn.hpp"

using namespace ibu;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig =
    "dataset.classes=3\n"
    "dataset.per_class=40\n"
    "dataset.dim=8\n"
    "dataset.spread=0.06\n"
    "partition.edr=0.15\n"
    "backdoor.trigger=0,1,2\n"
    "backdoor.target=0\n"
    "model.compressor_hidden=16\n"
    "model.latent_dim=4\n"
    "model.approximator_hidden=16\n"
    "train.epochs=10\n"
    "unlearn.epochs=1\n"
    "unlearn.critic_hidden=8\n"
    "unlearn.critic_warmup=10\n"
    "unlearn.critic_inner=1\n"
    "unlearn.critic_batch=16\n"
    "eval.critic_hidden=8\n"
    "eval.critic_steps=30\n"
    "eval.critic_batch=16\n"
    "eval.attack_hidden=8\n"
    "eval.attack_epochs=10\n"
    "eval.attack_batch=8\n";

std::string tmp_path(const std::string& name) {
    fs::create_directories("test_cli_tmp");
    return (fs::path("test_cli_tmp") / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

bool params_equal(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [k, t] : a) {
        auto it = b.find(k);
        if (it == b.end() || it->second.shape != t.shape || it->second.data != t.data) return false;
    }
    return true;
}

bool models_equal(const vib::VibModel& a, const vib::VibModel& b) {
    return params_equal(a.compressor.params, b.compressor.params) &&
           params_equal(a.approximator.params, b.approximator.params);
}

// parses "epsilon,delta\nA,B\n"
std::pair<double, double> parse_budget(const std::string& text) {
    REQUIRE(text.rfind("epsilon,delta\n", 0) == 0);
    std::string row = text.substr(text.find('\n') + 1);
    std::size_t comma = row.find(',');
    REQUIRE(comma != std::string::npos);
    return {std::stod(row.substr(0, comma)), std::stod(row.substr(comma + 1))};
}

int run_binary(const std::string& args, const std::string& capture) {
    std::string cmd = std::string(IBU_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
    return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("config parsing fills defaults and rejects bad input") {
    cli::Config def = cli::parse_config("");
    CHECK(def.dataset.kind == "blobs");
    CHECK(def.train.epochs == 30);
    CHECK(def.mask.sr == 0.6);
    CHECK(def.unlearn.critic_hidden == std::vector<std::size_t>{64, 64});

    cli::Config c = cli::parse_config(
        "# comment\n"
        "\n"
        "  train.lr = 0.02  \n"
        "model.compressor_hidden=48,24\n"
        "backdoor.trigger=\n"
        "sweep.betas=1e-4,0.01\n");
    CHECK(c.train.lr == 0.02);
    CHECK(c.model.compressor_hidden == std::vector<std::size_t>{48, 24});
    CHECK(c.backdoor.trigger.empty());
    CHECK(c.sweep.betas == std::vector<double>{1e-4, 0.01});

    CHECK_THROWS_WITH_AS(cli::parse_config("train.lrr=1\n"), "unknown key 'train.lrr'", cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("train.lr=1\ntrain.lr=2\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("train.lr\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("train.epochs=-3\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("train.lr=fast\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("train.lr=0\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("mask.sr=1.5\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("mask.strategy=sometimes\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("mask.mode=loud\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("unlearn.lambda=2\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("dataset.kind=parquet\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("partition.aux_source=nowhere\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("backdoor.trigger=1,1\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("dataset.holdout=1\n"), cli::ConfigError);
    CHECK_THROWS_AS(cli::parse_config("sweep.srs=\n"), cli::ConfigError);
}

TEST_CASE("seed override fans out distinct per-stage seeds") {
    cli::Config c = cli::parse_config("");
    cli::apply_seed_override(c, 99);
    CHECK(c.dataset.seed == (99 ^ fnv1a64("data")));
    CHECK(c.train.seed == (99 ^ fnv1a64("train")));
    CHECK(c.mask.seed == (99 ^ fnv1a64("mask")));
    std::set<std::uint64_t> seeds{c.dataset.seed, c.partition.seed, c.model.seed, c.train.seed,
                                  c.mask.seed,    c.unlearn.seed,   c.retrain.seed, c.eval.seed};
    CHECK(seeds.size() == 8);

    cli::Config again = cli::parse_config("");
    cli::apply_seed_override(again, 99);
    CHECK(again.train.seed == c.train.seed);
}

TEST_CASE("dp-account prints the closed-form budget") {
    std::ostringstream out;
    cli::cmd_dp_account(cli::parse_config("dataset.dim=784\nmask.sr=0.2\nmask.strategy=with_replacement\n"),
                        out);
    auto [eps, delta] = parse_budget(out.str());
    CHECK(eps == doctest::Approx(0.199).epsilon(0.02));
    CHECK(delta == doctest::Approx(0.182).epsilon(0.02));

    std::ostringstream out2;
    cli::cmd_dp_account(
        cli::parse_config("dataset.dim=784\nmask.sr=1.0\nmask.strategy=without_replacement\n"), out2);
    auto [eps2, delta2] = parse_budget(out2.str());
    CHECK(eps2 == doctest::Approx(std::log(785.0)).epsilon(1e-12));
    CHECK(delta2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("train writes model, compressor and trace deterministically") {
    cli::Config c = cli::parse_config(kTinyConfig);

    SUBCASE("epochs=0 stores the initialization") {
        cli::Config c0 = c;
        c0.train.epochs = 0;
        std::string out = tmp_path("init.bldu");
        cli::cmd_train(c0, out);
        vib::VibModel stored = protocol::load_model(out);
        cli::World w = cli::build_world(c0);
        vib::VibModel init = cli::init_model(c0, w.train.n(), w.train.num_classes);
        // f32 storage keeps the fresh uniform init bit-exact after widening
        vib::VibModel init_rt = protocol::load_model(out);
        CHECK(models_equal(stored, init_rt));
        CHECK(stored.compressor.spec.widths == init.compressor.spec.widths);
        CHECK(slurp(cli::trace_path_for(out)) == "epoch,loss\n");
    }

    SUBCASE("artifacts are byte-identical across runs and carry one trace row per epoch") {
        std::string a = tmp_path("run_a.bldu"), b = tmp_path("run_b.bldu");
        cli::cmd_train(c, a);
        cli::cmd_train(c, b);
        CHECK(slurp(a) == slurp(b));
        CHECK(slurp(cli::compressor_path_for(a)) == slurp(cli::compressor_path_for(b)));
        std::string trace = slurp(cli::trace_path_for(a));
        CHECK(trace == slurp(cli::trace_path_for(b)));
        CHECK(count_lines(trace) == 1 + c.train.epochs);
        CHECK(trace.rfind("epoch,loss\n", 0) == 0);
    }
}

TEST_CASE("request preparation, unlearning and evaluation wire together") {
    cli::Config c = cli::parse_config(kTinyConfig);
    std::string model_path = tmp_path("model.bldu");
    std::string request_path = tmp_path("request.bldu");
    cli::cmd_train(c, model_path);

    std::ostringstream budget;
    cli::cmd_prepare_request(c, cli::compressor_path_for(model_path), "", request_path, budget);

    SUBCASE("printed budget matches the accountant and the request validates") {
        auto [eps, delta] = parse_budget(budget.str());
        masking::DpAccount acc = masking::account(cli::mask_spec(c, 8));
        CHECK(eps == acc.epsilon);
        CHECK(delta == acc.delta);

        protocol::UnlearningRequest req = protocol::load_request(request_path);
        vib::VibModel model = protocol::load_model(model_path);
        protocol::Validation v = protocol::validate_request(req, model);
        INFO(v.reason);
        CHECK(v.accepted);
    }

    SUBCASE("erase rows can come from a csv instead of the config partition") {
        cli::World w = cli::build_world(c);
        std::string erase_csv = tmp_path("erased.csv");
        data::save_csv(w.erased_bd, erase_csv);
        std::string alt = tmp_path("request_csv.bldu");
        std::ostringstream msg;
        cli::cmd_prepare_request(c, cli::compressor_path_for(model_path), erase_csv, alt, msg);
        protocol::UnlearningRequest req = protocol::load_request(alt);
        CHECK(protocol::validate_request(req, protocol::load_model(model_path)).accepted);
        CHECK(req.z_e.rows() == w.erased_bd.m());
    }

    SUBCASE("unlearn with epochs=0 is the identity and reruns are byte-identical") {
        cli::Config c0 = c;
        c0.unlearn.epochs = 0;
        std::string out = tmp_path("unlearned0.bldu");
        cli::cmd_unlearn(c0, model_path, request_path, out);
        CHECK(models_equal(protocol::load_model(out), protocol::load_model(model_path)));
        CHECK(slurp(cli::trace_path_for(out)).rfind("epoch,", 0) == 0);

        std::string again = tmp_path("unlearned0_b.bldu");
        cli::cmd_unlearn(c0, model_path, request_path, again);
        CHECK(slurp(out) == slurp(again));
    }

    SUBCASE("a tampered request is rejected before any training") {
        protocol::UnlearningRequest req = protocol::load_request(request_path);
        req.dp.epsilon += 0.25;
        std::string bad = tmp_path("tampered.bldu");
        protocol::save_request(bad, req);
        CHECK_THROWS_WITH_AS(cli::cmd_unlearn(c, model_path, bad, tmp_path("never.bldu")),
                             "request rejected: dp metadata inconsistent", std::runtime_error);
    }

    SUBCASE("evaluate emits one report row per model") {
        std::string unl = tmp_path("unlearned.bldu");
        std::string retr = tmp_path("retrained.bldu");
        std::string report = tmp_path("report.csv");
        cli::cmd_unlearn(c, model_path, request_path, unl);
        cli::cmd_retrain_baseline(c, model_path, retr);
        cli::cmd_evaluate(c, model_path, unl, retr, report);

        std::vector<evalkit::MetricsReport> rows = evalkit::load_report_csv(report);
        REQUIRE(rows.size() == 3);
        CHECK(rows[0].model == "original");
        CHECK(rows[1].model == "unlearned");
        CHECK(rows[2].model == "retrained");
        for (const auto& r : rows) {
            CHECK(r.test_acc >= 0.0);
            CHECK(r.test_acc <= 1.0);
            CHECK(r.mia_auc >= 0.0);
            CHECK(r.mia_auc <= 1.0);
            CHECK(std::isfinite(r.recon_mse));
        }
    }
}

TEST_CASE("gradcheck passes and reports one row per check") {
    cli::Config c = cli::parse_config("gradcheck.seeds=3\n");
    std::ostringstream out;
    CHECK(cli::cmd_gradcheck(c, out));
    std::string text = out.str();
    CHECK(text.rfind("check,seed,max_rel_err,pass\n", 0) == 0);
    CHECK(count_lines(text) == 1 + 3 * 3);
    CHECK(text.find(",0\n") == std::string::npos);  // no failed rows
}

TEST_CASE("sweep emits one row per grid point") {
    cli::Config c = cli::parse_config(kTinyConfig);
    c.train.epochs = 3;
    c.sweep.betas = {1e-4, 1e-2};
    c.sweep.srs = {0.5};
    c.sweep.fixed_beta = 1e-2;
    c.sweep.fixed_sr = 0.5;
    std::string out = tmp_path("sweep.csv");
    cli::cmd_sweep(c, out);
    std::string text = slurp(out);
    CHECK(text.rfind("beta,sr,test_acc,kl_upper,ce_lower,phi,recon_mse\n", 0) == 0);
    // (1e-4, .5), (1e-2, .5) from the beta leg; the sr leg duplicates (1e-2, .5)
    CHECK(count_lines(text) == 1 + 2);
}

TEST_CASE("the binary maps errors to nonzero exits") {
    std::string cap = tmp_path("cap.txt");
    CHECK(run_binary("dp-account", cap) == 0);
    CHECK(slurp(cap).rfind("epsilon,delta\n", 0) == 0);

    CHECK(run_binary("no-such-command", cap) != 0);
    CHECK(run_binary("train", cap) != 0);  // --out missing
    CHECK(run_binary("unlearn missing_model.bldu missing_request.bldu --out x.bldu", cap) != 0);

    std::string bad_cfg = tmp_path("bad.cfg");
    std::ofstream(bad_cfg) << "train.lrr=1\n";
    CHECK(run_binary("dp-account --config " + bad_cfg, cap) != 0);
    CHECK(slurp(cap).find("unknown key") != std::string::npos);

    std::string seeded = tmp_path("seeded.txt");
    CHECK(run_binary("dp-account --seed 5", seeded) == 0);
    CHECK(slurp(seeded).rfind("epsilon,delta\n", 0) == 0);
}
