#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <stdexcept>

#include "ibu/data.hpp"
#include "ibu/evalkit.hpp"
#include "ibu/masking.hpp"
#include "ibu/protocol.hpp"
#include "ibu/rng.hpp"
#include "ibu/unlearn.hpp"
#include "ibu/vib.hpp"

namespace py = pybind11;
using namespace ibu;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
    Tensor t = Tensor::zeros({static_cast<std::size_t>(a.shape(0)),
                              static_cast<std::size_t>(a.shape(1))});
    std::memcpy(t.data.data(), a.data(), sizeof(double) * t.data.size());
    return t;
}

py::array_t<double> to_array(const Tensor& t) {
    if (t.size() == 0) return py::array_t<double>(std::vector<py::ssize_t>{0, 0});
    py::array_t<double> out({t.rows(), t.cols()});
    std::memcpy(out.mutable_data(), t.data.data(), sizeof(double) * t.data.size());
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Blind unlearning on bottlenecked representations";

    py::class_<Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def_property_readonly("seed", &Rng::seed)
        .def("uniform", &Rng::uniform)
        .def("normal", &Rng::normal)
        .def("substream", &Rng::substream, py::arg("tag"));

    // --- data -----------------------------------------------------------
    auto d = m.def_submodule("data", "datasets, partitions, backdoors");

    py::class_<data::Dataset>(d, "Dataset")
        .def(py::init([](const DoubleArray& inputs, std::vector<std::uint32_t> labels,
                         std::size_t num_classes) {
                 data::Dataset ds{to_tensor(inputs), std::move(labels), num_classes};
                 data::validate(ds);
                 return ds;
             }),
             py::arg("inputs"), py::arg("labels"), py::arg("num_classes"))
        .def_property_readonly("inputs", [](const data::Dataset& ds) { return to_array(ds.inputs); })
        .def_readonly("labels", &data::Dataset::labels)
        .def_readonly("num_classes", &data::Dataset::num_classes)
        .def("__len__", &data::Dataset::m);

    py::enum_<data::AuxSource>(d, "AuxSource")
        .value("held_out", data::AuxSource::held_out)
        .value("random_inputs", data::AuxSource::random_inputs);

    py::class_<data::Partition>(d, "Partition")
        .def_readonly("remaining", &data::Partition::remaining)
        .def_readonly("erased", &data::Partition::erased)
        .def_readonly("auxiliary", &data::Partition::auxiliary)
        .def_readonly("test", &data::Partition::test)
        .def_readonly("erased_rows", &data::Partition::erased_rows);

    py::class_<data::BackdoorSpec>(d, "BackdoorSpec")
        .def(py::init<std::vector<std::size_t>, double, std::uint32_t>(),
             py::arg("trigger_indices"), py::arg("trigger_value") = 1.0,
             py::arg("target_label") = 0)
        .def_readonly("trigger_indices", &data::BackdoorSpec::trigger_indices)
        .def_readonly("trigger_value", &data::BackdoorSpec::trigger_value)
        .def_readonly("target_label", &data::BackdoorSpec::target_label);

    d.def("default_backdoor", &data::default_backdoor, py::arg("n_features"));
    d.def("synth_blobs", &data::synth_blobs, py::arg("rng"), py::arg("classes"),
          py::arg("per_class"), py::arg("dim"), py::arg("spread"));
    d.def("select_rows", &data::select_rows, py::arg("ds"), py::arg("rows"));
    d.def("concat", &data::concat, py::arg("a"), py::arg("b"));
    d.def("split_holdout", &data::split_holdout, py::arg("ds"), py::arg("fraction"), py::arg("rng"));
    d.def("make_partition", &data::make_partition, py::arg("train"), py::arg("edr"),
          py::arg("source"), py::arg("rng"));
    d.def("inject_backdoor", &data::inject_backdoor, py::arg("ds"), py::arg("spec"), py::arg("rows"));
    d.def("save_csv", &data::save_csv, py::arg("ds"), py::arg("path"));
    d.def("load_csv", &data::load_csv, py::arg("path"));

    // --- masking ----------------------------------------------------------
    auto mk = m.def_submodule("masking", "feature sampling and its privacy account");

    py::enum_<masking::Strategy>(mk, "Strategy")
        .value("with_replacement", masking::Strategy::with_replacement)
        .value("without_replacement", masking::Strategy::without_replacement);

    py::class_<masking::MaskSpec>(mk, "MaskSpec")
        .def(py::init([](std::size_t n, double sr, masking::Strategy strategy, double mask_value) {
                 masking::MaskSpec spec{n, sr, strategy, mask_value};
                 masking::validate(spec);
                 return spec;
             }),
             py::arg("n"), py::arg("sr"),
             py::arg("strategy") = masking::Strategy::without_replacement,
             py::arg("mask_value") = 0.0)
        .def_readwrite("n", &masking::MaskSpec::n)
        .def_readwrite("sr", &masking::MaskSpec::sr)
        .def_readwrite("strategy", &masking::MaskSpec::strategy)
        .def_readwrite("mask_value", &masking::MaskSpec::mask_value);

    py::class_<masking::DpAccount>(mk, "DpAccount")
        .def_readwrite("epsilon", &masking::DpAccount::epsilon)
        .def_readwrite("delta", &masking::DpAccount::delta)
        .def_readonly("n", &masking::DpAccount::n)
        .def_readonly("k", &masking::DpAccount::k)
        .def_readonly("strategy", &masking::DpAccount::strategy);

    mk.def("derived_k", &masking::derived_k, py::arg("spec"));
    mk.def("account", &masking::account, py::arg("spec"));
    mk.def("account_for_k", &masking::account_for_k, py::arg("n"), py::arg("k"), py::arg("strategy"));
    mk.def(
        "mask_batch",
        [](const DoubleArray& batch, const masking::MaskSpec& spec, Rng& rng) {
            return to_array(masking::masked_values(masking::mask_batch(to_tensor(batch), spec, rng)));
        },
        py::arg("batch"), py::arg("spec"), py::arg("rng"));

    // --- vib --------------------------------------------------------------
    auto v = m.def_submodule("vib", "bottlenecked stochastic classifier");

    py::class_<vib::VibModel>(v, "VibModel")
        .def_readonly("beta", &vib::VibModel::beta)
        .def_readonly("latent_dim", &vib::VibModel::latent_dim)
        .def_property_readonly("n_features", &vib::VibModel::n_features)
        .def_property_readonly("num_classes", &vib::VibModel::num_classes);

    py::class_<vib::TrainConfig>(v, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &vib::TrainConfig::epochs)
        .def_readwrite("batch_size", &vib::TrainConfig::batch_size)
        .def_readwrite("lr", &vib::TrainConfig::lr)
        .def_readwrite("momentum", &vib::TrainConfig::momentum);

    v.def("make_model", &vib::make_model, py::arg("n_features"), py::arg("compressor_hidden"),
          py::arg("latent_dim"), py::arg("approximator_hidden"), py::arg("classes"), py::arg("beta"),
          py::arg("rng"));
    v.def("train", &vib::train, py::arg("model"), py::arg("ds"), py::arg("cfg"), py::arg("rng"),
          py::call_guard<py::gil_scoped_release>());
    v.def(
        "encode",
        [](const vib::VibModel& model, const DoubleArray& inputs) {
            vib::GaussianCode code = vib::encode(model, to_tensor(inputs));
            return py::make_tuple(to_array(code.mean), to_array(code.log_var));
        },
        py::arg("model"), py::arg("inputs"));
    v.def(
        "predict",
        [](const vib::VibModel& model, const DoubleArray& inputs) {
            return vib::predict(model, to_tensor(inputs));
        },
        py::arg("model"), py::arg("inputs"));
    v.def("accuracy", &vib::accuracy, py::arg("model"), py::arg("ds"));

    // --- protocol -----------------------------------------------------------
    auto pr = m.def_submodule("protocol", "checkpoints, requests, server-side gate");

    py::enum_<protocol::CodeMode>(pr, "CodeMode")
        .value("mean_code", protocol::CodeMode::mean_code)
        .value("sampled", protocol::CodeMode::sampled);

    py::class_<protocol::CompressorCheckpoint>(pr, "CompressorCheckpoint")
        .def_readonly("widths", &protocol::CompressorCheckpoint::widths)
        .def_readonly("latent_dim", &protocol::CompressorCheckpoint::latent_dim)
        .def_readonly("beta", &protocol::CompressorCheckpoint::beta)
        .def_readonly("seed", &protocol::CompressorCheckpoint::seed);

    py::class_<protocol::UnlearningRequest>(pr, "UnlearningRequest")
        .def_property_readonly(
            "z_e", [](const protocol::UnlearningRequest& r) { return to_array(r.z_e); })
        .def_readonly("y_e", &protocol::UnlearningRequest::y_e)
        .def_readwrite("dp", &protocol::UnlearningRequest::dp)
        .def_readonly("sr", &protocol::UnlearningRequest::sr)
        .def_readonly("beta_used", &protocol::UnlearningRequest::beta_used)
        .def_readonly("checkpoint_hash", &protocol::UnlearningRequest::checkpoint_hash);

    py::class_<protocol::Validation>(pr, "Validation")
        .def_readonly("accepted", &protocol::Validation::accepted)
        .def_readonly("reason", &protocol::Validation::reason)
        .def("__bool__", [](const protocol::Validation& v) { return v.accepted; });

    pr.def("strip_to_compressor", &protocol::strip_to_compressor, py::arg("model"),
           py::arg("seed") = 0);
    pr.def(
        "encode",
        [](const protocol::CompressorCheckpoint& cp, const DoubleArray& inputs) {
            vib::GaussianCode code = protocol::encode(cp, to_tensor(inputs));
            return py::make_tuple(to_array(code.mean), to_array(code.log_var));
        },
        py::arg("checkpoint"), py::arg("inputs"));
    pr.def("save_compressor", &protocol::save_compressor, py::arg("path"), py::arg("checkpoint"));
    pr.def("load_compressor", &protocol::load_compressor, py::arg("path"));
    pr.def("save_model", &protocol::save_model, py::arg("path"), py::arg("model"),
           py::arg("seed") = 0);
    pr.def("load_model", &protocol::load_model, py::arg("path"));
    pr.def(
        "prepare_request",
        [](const protocol::CompressorCheckpoint& cp, const DoubleArray& erased_inputs,
           const std::vector<std::uint32_t>& erased_labels, const masking::MaskSpec& spec,
           protocol::CodeMode mode, Rng& rng) {
            return protocol::prepare_request(cp, to_tensor(erased_inputs), erased_labels, spec,
                                             mode, rng);
        },
        py::arg("checkpoint"), py::arg("erased_inputs"), py::arg("erased_labels"), py::arg("spec"),
        py::arg("mode"), py::arg("rng"));
    pr.def("save_request", &protocol::save_request, py::arg("path"), py::arg("request"));
    pr.def("load_request", &protocol::load_request, py::arg("path"));
    pr.def("validate_request", &protocol::validate_request, py::arg("request"),
           py::arg("server_model"));

    // --- unlearn -------------------------------------------------------------
    auto u = m.def_submodule("unlearn", "post-hoc removal and its baseline");

    py::class_<unlearn::ForgetBatch>(u, "ForgetBatch")
        .def(py::init([](const DoubleArray& z, std::vector<std::uint32_t> labels) {
                 return unlearn::ForgetBatch{to_tensor(z), std::move(labels)};
             }),
             py::arg("z"), py::arg("labels"))
        .def_property_readonly("z", [](const unlearn::ForgetBatch& fb) { return to_array(fb.z); })
        .def_readonly("labels", &unlearn::ForgetBatch::labels)
        .def("__len__", &unlearn::ForgetBatch::m);

    py::class_<unlearn::MgdaWeights>(u, "MgdaWeights")
        .def_readonly("alpha", &unlearn::MgdaWeights::alpha)
        .def_readonly("g_retain_norm", &unlearn::MgdaWeights::g_retain_norm)
        .def_readonly("g_forget_norm", &unlearn::MgdaWeights::g_forget_norm)
        .def_readonly("degenerate", &unlearn::MgdaWeights::degenerate);

    py::class_<unlearn::UnlearnConfig>(u, "UnlearnConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &unlearn::UnlearnConfig::epochs)
        .def_readwrite("batch_size", &unlearn::UnlearnConfig::batch_size)
        .def_readwrite("lr", &unlearn::UnlearnConfig::lr)
        .def_readwrite("momentum", &unlearn::UnlearnConfig::momentum)
        .def_readwrite("lambda_", &unlearn::UnlearnConfig::lambda)
        .def_readwrite("seed", &unlearn::UnlearnConfig::seed)
        .def_readwrite("critic_hidden", &unlearn::UnlearnConfig::critic_hidden)
        .def_readwrite("critic_warmup_steps", &unlearn::UnlearnConfig::critic_warmup_steps)
        .def_readwrite("critic_inner_steps", &unlearn::UnlearnConfig::critic_inner_steps)
        .def_readwrite("critic_batch", &unlearn::UnlearnConfig::critic_batch)
        .def_readwrite("critic_lr", &unlearn::UnlearnConfig::critic_lr)
        .def_readwrite("critic_momentum", &unlearn::UnlearnConfig::critic_momentum)
        .def_readwrite("ema_decay", &unlearn::UnlearnConfig::ema_decay)
        .def_readwrite("disable_forgetting", &unlearn::UnlearnConfig::disable_forgetting);

    py::class_<unlearn::TraceRow>(u, "TraceRow")
        .def_readonly("epoch", &unlearn::TraceRow::epoch)
        .def_readonly("retain_loss", &unlearn::TraceRow::retain_loss)
        .def_readonly("forget_loss", &unlearn::TraceRow::forget_loss)
        .def_readonly("alpha", &unlearn::TraceRow::alpha)
        .def_readonly("dv_estimate", &unlearn::TraceRow::dv_estimate)
        .def_readonly("label_term", &unlearn::TraceRow::label_term);

    py::class_<unlearn::UnlearnResult>(u, "UnlearnResult")
        .def_readonly("model", &unlearn::UnlearnResult::model)
        .def_readonly("trace", &unlearn::UnlearnResult::trace);

    u.def("mgda_alpha", &unlearn::mgda_alpha, py::arg("g_retain"), py::arg("g_forget"),
          py::arg("degeneracy_tol") = 1e-12);
    u.def("run", &unlearn::run, py::arg("model"), py::arg("forget_batch"), py::arg("aux"),
          py::arg("cfg"), py::call_guard<py::gil_scoped_release>());
    u.def("retrain_baseline", &unlearn::retrain_baseline, py::arg("model"), py::arg("remaining"),
          py::arg("cfg"), py::arg("rng"), py::call_guard<py::gil_scoped_release>());

    // --- evalkit -----------------------------------------------------------
    auto e = m.def_submodule("evalkit", "attacks and leakage metrics");

    py::class_<evalkit::PrivacyDescriptor>(e, "PrivacyDescriptor")
        .def_readonly("kl_upper", &evalkit::PrivacyDescriptor::kl_upper)
        .def_readonly("ce_lower", &evalkit::PrivacyDescriptor::ce_lower)
        .def_readonly("phi", &evalkit::PrivacyDescriptor::phi);

    py::class_<evalkit::AttackConfig>(e, "AttackConfig")
        .def(py::init<>())
        .def_readwrite("hidden", &evalkit::AttackConfig::hidden)
        .def_readwrite("epochs", &evalkit::AttackConfig::epochs)
        .def_readwrite("batch_size", &evalkit::AttackConfig::batch_size)
        .def_readwrite("lr", &evalkit::AttackConfig::lr)
        .def_readwrite("momentum", &evalkit::AttackConfig::momentum);

    py::class_<evalkit::ReportSizes>(e, "ReportSizes")
        .def_readonly("test_m", &evalkit::ReportSizes::test_m)
        .def_readonly("erased_m", &evalkit::ReportSizes::erased_m)
        .def_readonly("backdoor_m", &evalkit::ReportSizes::backdoor_m)
        .def_readonly("aux_m", &evalkit::ReportSizes::aux_m);

    py::class_<evalkit::MetricsReport>(e, "MetricsReport")
        .def_readonly("model", &evalkit::MetricsReport::model)
        .def_readonly("test_acc", &evalkit::MetricsReport::test_acc)
        .def_readonly("backdoor_acc", &evalkit::MetricsReport::backdoor_acc)
        .def_readonly("erased_acc", &evalkit::MetricsReport::erased_acc)
        .def_readonly("dv_mi", &evalkit::MetricsReport::dv_mi)
        .def_readonly("kl_upper", &evalkit::MetricsReport::kl_upper)
        .def_readonly("ce_lower", &evalkit::MetricsReport::ce_lower)
        .def_readonly("phi", &evalkit::MetricsReport::phi)
        .def_readonly("recon_mse", &evalkit::MetricsReport::recon_mse)
        .def_readonly("mia_auc", &evalkit::MetricsReport::mia_auc)
        .def_readonly("sizes", &evalkit::MetricsReport::sizes);

    py::class_<evalkit::ProbeSpec>(e, "ProbeSpec")
        .def(py::init<>())
        .def_readwrite("mask", &evalkit::ProbeSpec::mask)
        .def_readwrite("critic_hidden", &evalkit::ProbeSpec::critic_hidden)
        .def_readwrite("critic_steps", &evalkit::ProbeSpec::critic_steps)
        .def_readwrite("critic_batch", &evalkit::ProbeSpec::critic_batch)
        .def_readwrite("critic_lr", &evalkit::ProbeSpec::critic_lr)
        .def_readwrite("critic_momentum", &evalkit::ProbeSpec::critic_momentum)
        .def_readwrite("ema_decay", &evalkit::ProbeSpec::ema_decay)
        .def_readwrite("attack", &evalkit::ProbeSpec::attack);

    e.def("backdoor_accuracy", &evalkit::backdoor_accuracy, py::arg("model"), py::arg("triggered"),
          py::arg("target_label"));
    e.def("dual_privacy_descriptor", &evalkit::dual_privacy_descriptor, py::arg("model"),
          py::arg("probe"), py::arg("rng"));
    e.def(
        "reconstruction_attack",
        [](const DoubleArray& train_codes, const DoubleArray& train_inputs,
           const DoubleArray& eval_codes, const DoubleArray& eval_inputs,
           const evalkit::AttackConfig& cfg, Rng& rng) {
            Tensor tc = to_tensor(train_codes), ti = to_tensor(train_inputs);
            Tensor ec = to_tensor(eval_codes), ei = to_tensor(eval_inputs);
            py::gil_scoped_release release;
            return evalkit::reconstruction_attack(tc, ti, ec, ei, cfg, rng);
        },
        py::arg("train_codes"), py::arg("train_inputs"), py::arg("eval_codes"),
        py::arg("eval_inputs"), py::arg("cfg"), py::arg("rng"));
    e.def("auc", &evalkit::auc, py::arg("positives"), py::arg("negatives"));
    e.def("mia_auc", &evalkit::mia_auc, py::arg("original"), py::arg("unlearned"),
          py::arg("erased"), py::arg("non_members"));
    e.def("full_report", &evalkit::full_report, py::arg("original"), py::arg("unlearned"),
          py::arg("retrained"), py::arg("part"), py::arg("backdoor"), py::arg("probes"),
          py::arg("rng"), py::call_guard<py::gil_scoped_release>());
    e.def("save_report_csv", &evalkit::save_report_csv, py::arg("path"), py::arg("rows"));
    e.def("load_report_csv", &evalkit::load_report_csv, py::arg("path"));
}
