#pragma once

#include <string>
#include <vector>

#include "ibu/data.hpp"
#include "ibu/masking.hpp"
#include "ibu/rng.hpp"
#include "ibu/tensor.hpp"
#include "ibu/vib.hpp"

namespace ibu::evalkit {

// Fraction of the triggered rows the model sends to the attacker's target.
// Callers choose the evaluation set; rows whose clean label already equals the
// target are usually excluded upstream.
double backdoor_accuracy(const vib::VibModel& model, const data::Dataset& triggered,
                         std::uint32_t target_label);

// Bound-level leakage readout: the code KL term upper-bounds what the codes
// keep about the inputs, ln C minus the cross-entropy lower-bounds what they
// keep about the labels, and phi is the gap between the two, floored at 0.
struct PrivacyDescriptor {
    double kl_upper = 0.0;
    double ce_lower = 0.0;
    double phi = 0.0;
};

PrivacyDescriptor dual_privacy_descriptor(const vib::VibModel& model, const data::Dataset& probe,
                                          Rng& rng);

struct AttackConfig {
    std::vector<std::size_t> hidden{32};
    std::size_t epochs = 150;
    std::size_t batch_size = 16;
    double lr = 0.05;
    double momentum = 0.9;
};

// Trains a decoder from codes back to inputs on the training pairs, then
// reports squared reconstruction error on the evaluation pairs (summed over
// features, averaged over samples).
double reconstruction_attack(const Tensor& train_codes, const Tensor& train_inputs,
                             const Tensor& eval_codes, const Tensor& eval_inputs,
                             const AttackConfig& cfg, Rng& rng);

// Rank-statistic AUC with ties counted half.
double auc(const std::vector<double>& positives, const std::vector<double>& negatives);

// Confidence-gap membership probe: per-sample score is the original model's
// confidence on the true label minus the unlearned model's, and the AUC
// separates erased rows (positives) from never-trained rows (negatives).
double mia_auc(const vib::VibModel& original, const vib::VibModel& unlearned,
               const data::Dataset& erased, const data::Dataset& non_members);

struct ReportSizes {
    std::size_t test_m = 0;
    std::size_t erased_m = 0;
    std::size_t backdoor_m = 0;
    std::size_t aux_m = 0;
};

struct MetricsReport {
    std::string model;  // original | unlearned | retrained
    double test_acc = 0.0;
    double backdoor_acc = 0.0;
    double erased_acc = 0.0;
    double dv_mi = 0.0;
    double kl_upper = 0.0;
    double ce_lower = 0.0;
    double phi = 0.0;
    double recon_mse = 0.0;
    double mia_auc = 0.0;
    ReportSizes sizes;
};

// Everything the metrics need beyond the models: how the client masked, and
// the critic/attacker training budgets.
struct ProbeSpec {
    masking::MaskSpec mask;
    std::vector<std::size_t> critic_hidden{32, 32};
    std::size_t critic_steps = 300;
    std::size_t critic_batch = 64;
    double critic_lr = 1e-2;
    double critic_momentum = 0.9;
    double ema_decay = 0.99;
    AttackConfig attack;
};

// One row per model over a shared replay of the client-side masking; the
// handed-over codes come from the original model like they did on the wire.
std::vector<MetricsReport> full_report(const vib::VibModel& original,
                                       const vib::VibModel& unlearned,
                                       const vib::VibModel& retrained, const data::Partition& part,
                                       const data::BackdoorSpec& backdoor, const ProbeSpec& probes,
                                       Rng& rng);

void save_report_csv(const std::string& path, const std::vector<MetricsReport>& rows);
std::vector<MetricsReport> load_report_csv(const std::string& path);

}  // namespace ibu::evalkit
