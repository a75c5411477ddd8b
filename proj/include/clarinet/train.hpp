#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clarinet/autodiff.hpp"
#include "clarinet/complabel.hpp"
#include "clarinet/data.hpp"
#include "clarinet/models.hpp"

namespace clarinet::train {

enum class Variant { clarinet, gac, two_step, ablation_ce, ablation_no_t };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

enum class PriorMode { batch, dataset };

/// Which way the discriminator moves on L_adv. `likelihood`: D climbs the
/// domain log-likelihood and F o G descends it through the reversal node.
/// `as_written`: D descends L_adv and F o G climbs it (unbounded for D).
enum class AdversarialSign { likelihood, as_written };

struct TrainConfig {
  double lr_classifier = 5e-5;   // gamma1
  double lr_adversarial = 0.005;  // gamma2
  int epochs = 100;              // T_max (desk-scale default)
  int adversarial_start = 5;     // T_s (desk-scale default)
  std::size_t batch_size = 128;
  int num_classes = 0;           // K; must match the source data
  double scatter_l = 0.5;
  double momentum = 0.9;
  double weight_decay = 5e-5;
  double lambda_gamma = 10.0;    // lambda(p) = 2 / (1 + exp(-gamma p)) - 1
  std::uint64_t seed = 0;
  Variant variant = Variant::clarinet;
  PriorMode prior_mode = PriorMode::batch;
  AdversarialSign adversarial_sign = AdversarialSign::likelihood;
  /// Diagnostic switch: when false the negative-risk ascent branch never fires.
  bool negative_correction = true;
  /// When false the `seconds` metric is written as 0 (byte-stable outputs).
  bool record_wall_clock = true;
  std::vector<std::size_t> g_hidden = {128, 64};
  std::vector<std::size_t> d_hidden = {64};

  void validate() const;
};

struct MetricsRecord {
  int epoch = 0;
  std::size_t iterations = 0;
  double comp_loss = 0.0;      // mean total complementary loss over the epoch
  double l_neg = 0.0;          // mean L_neg over the epoch
  double min_comp_loss = 0.0;  // smallest per-iteration total
  std::size_t ascent_steps = 0;
  std::optional<double> adv_loss;  // absent while the adversary is gated off
  double lambda = 0.0;
  std::optional<double> target_acc;
  double seconds = 0.0;
};

/// Header and rows with columns
/// epoch,comp_loss,l_neg,ascent_steps,adv_loss,lambda,target_acc,seconds
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);

/// v <- momentum * v + grad + weight_decay * theta;  theta <- theta - lr * v
void sgd_step(ad::Parameter& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay);

/// SGD with momentum over a fixed parameter list; owns the velocity buffers.
class Sgd {
 public:
  Sgd(std::vector<ad::Parameter*> params, double lr, double momentum, double weight_decay);
  /// Descent on the parameters' current grad; `sign = -1` ascends.
  void step(double sign = 1.0);

 private:
  std::vector<ad::Parameter*> params_;
  std::vector<Tensor> velocity_;
  double lr_, momentum_, weight_decay_;
};

/// lambda(p) = 2 / (1 + exp(-gamma p)) - 1, p clamped into [0,1] with a warning.
double lambda_schedule(double progress, double gamma = 10.0);

enum class Branch { descent, ascent };

struct ClassifierStep {
  int epoch = 0;
  std::size_t iteration = 0;
  Branch branch = Branch::descent;
  /// Per-class complementary losses (empty for the cross-entropy ablation).
  std::vector<double> per_class;
  double total = 0.0;
  std::span<const std::size_t> source_batch;
};

/// Hooks for tests and diagnostics. All optional.
struct Observer {
  /// After backward, before the classifier parameters move.
  std::function<void(const ClassifierStep&, const models::NetworkTriplet&)> before_classifier_step;
  std::function<void(const ClassifierStep&, const models::NetworkTriplet&)> after_classifier_step;
  std::function<void(int epoch, std::size_t iteration, const models::NetworkTriplet&)> after_adversarial_step;
};

struct TrainResult {
  models::NetworkTriplet model;
  std::vector<MetricsRecord> metrics;
  /// Two-step only: fraction of pseudo labels that disagree with the hidden
  /// true labels, when those are attached.
  std::optional<double> pseudo_label_noise;
};

/// One-step adversarial training (also runs the two ablations, selected by
/// config.variant). `eval_target` is only used to fill target_acc at the end
/// of each epoch.
TrainResult train_clarinet(const complabel::ComplementaryDataset& source, const data::UnlabeledDataset& target,
                           const TrainConfig& config, const data::LabeledDataset* eval_target = nullptr,
                           const Observer* observer = nullptr);

/// Complementary-label learning with the ascent correction, no adversary.
TrainResult train_gac(const complabel::ComplementaryDataset& source, const TrainConfig& config,
                      const data::LabeledDataset* eval_target = nullptr, const Observer* observer = nullptr);

/// GAC, then pseudo-label the source and train a fresh network with
/// cross-entropy plus a feature-level domain adversary.
TrainResult train_two_step(const complabel::ComplementaryDataset& source, const data::UnlabeledDataset& target,
                           const TrainConfig& config, const data::LabeledDataset* eval_target = nullptr,
                           const Observer* observer = nullptr);

/// Dispatch on config.variant.
TrainResult run_variant(const complabel::ComplementaryDataset& source, const data::UnlabeledDataset& target,
                        const TrainConfig& config, const data::LabeledDataset* eval_target = nullptr,
                        const Observer* observer = nullptr);

/// Fraction of argmax predictions equal to the true labels.
double evaluate(const models::NetworkTriplet& net, const data::LabeledDataset& ds);

}  // namespace clarinet::train
