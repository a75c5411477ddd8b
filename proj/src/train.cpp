#include "clarinet/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "clarinet/error.hpp"
#include "clarinet/losses.hpp"

namespace clarinet::train {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::clarinet: return "clarinet";
    case Variant::gac: return "gac";
    case Variant::two_step: return "two-step";
    case Variant::ablation_ce: return "ablation-ce";
    case Variant::ablation_no_t: return "ablation-no-t";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : {Variant::clarinet, Variant::gac, Variant::two_step, Variant::ablation_ce, Variant::ablation_no_t}) {
    if (to_string(v) == name) return v;
  }
  throw ContractError("unknown variant '" + std::string(name) +
                      "' (expected clarinet, gac, two-step, ablation-ce or ablation-no-t)");
}

void TrainConfig::validate() const {
  if (!(lr_classifier > 0.0) || !(lr_adversarial > 0.0)) throw ContractError("config: learning rates must be > 0");
  if (epochs < 1) throw ContractError("config: epochs must be >= 1");
  // adversarial_start >= epochs is allowed: the adversary then never runs.
  if (adversarial_start < 0) throw ContractError("config: adversarial start epoch must be >= 0");
  if (batch_size < 1) throw ContractError("config: batch size must be >= 1");
  if (num_classes < 2) throw ContractError("config: K must be >= 2");
  if (!(scatter_l > 0.0)) throw ContractError("config: scatter temperature l must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ContractError("config: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ContractError("config: weight decay must be >= 0");
  if (g_hidden.empty() || d_hidden.empty()) throw ContractError("config: hidden width lists must be non-empty");
}

std::string metrics_csv_header() { return "epoch,comp_loss,l_neg,ascent_steps,adv_loss,lambda,target_acc,seconds"; }

std::string metrics_csv_row(const MetricsRecord& r) {
  std::ostringstream s;
  s.precision(17);
  s << r.epoch << ',' << r.comp_loss << ',' << r.l_neg << ',' << r.ascent_steps << ',';
  if (r.adv_loss) s << *r.adv_loss;
  s << ',' << r.lambda << ',';
  if (r.target_acc) s << *r.target_acc;
  s << ',' << r.seconds;
  return s.str();
}

void sgd_step(ad::Parameter& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
              double weight_decay) {
  if (!grad.same_shape(param.value) || !velocity.same_shape(param.value)) {
    throw ContractError("sgd_step: shape mismatch for '" + param.name + "': value " +
                        shape_string(param.value.shape()) + ", grad " + shape_string(grad.shape()) + ", velocity " +
                        shape_string(velocity.shape()));
  }
  auto theta = param.value.values();
  auto v = velocity.values();
  const auto g = grad.values();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * theta[i];
    theta[i] -= lr * v[i];
  }
}

Sgd::Sgd(std::vector<ad::Parameter*> params, double lr, double momentum, double weight_decay)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  for (auto* p : params_) velocity_.emplace_back(p->value.shape(), std::vector<double>(p->value.size(), 0.0));
}

void Sgd::step(double sign) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (sign == 1.0) {
      sgd_step(p, p.grad, velocity_[i], lr_, momentum_, weight_decay_);
    } else {
      Tensor g = p.grad;
      for (auto& x : g.values()) x *= sign;
      sgd_step(p, g, velocity_[i], lr_, momentum_, weight_decay_);
    }
  }
}

double lambda_schedule(double progress, double gamma) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    std::cerr << "warning: lambda_schedule progress " << progress << " outside [0,1]; clamped\n";
    progress = std::clamp(std::isnan(progress) ? 0.0 : progress, 0.0, 1.0);
  }
  return 2.0 / (1.0 + std::exp(-gamma * progress)) - 1.0;
}

double evaluate(const models::NetworkTriplet& net, const data::LabeledDataset& ds) {
  const auto pred = models::pseudo_label(net, ds.features);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == ds.labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

namespace {

enum class LossKind { complementary, cross_entropy };

struct LoopSpec {
  LossKind loss = LossKind::complementary;
  bool adversary = true;
  bool apply_map = true;
  models::Conditioning conditioning = models::Conditioning::conditional;
  std::uint64_t stream = 0;  // offsets the rng streams (two-step stage 2)
  int epoch_offset = 0;
};

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream};
  return std::mt19937_64(seq);
}

std::uint64_t init_seed(std::uint64_t seed, std::uint64_t stream) {
  auto rng = stream_rng(seed, 100 + stream);
  return rng();
}

void check_source(const complabel::ComplementaryDataset& source, const TrainConfig& config) {
  config.validate();
  if (source.num_classes() != config.num_classes) {
    throw ContractError("config K=" + std::to_string(config.num_classes) + " does not match source K=" +
                        std::to_string(source.num_classes()));
  }
}

/// Algorithm loop shared by every variant. `labels` are the source labels the
/// classifier objective consumes (complementary or pseudo labels).
TrainResult run_loop(const Tensor& source_x, std::span<const int> labels, const data::UnlabeledDataset* target,
                     const TrainConfig& config, const LoopSpec& spec, const data::LabeledDataset* eval_target,
                     const Observer* observer) {
  using clock = std::chrono::steady_clock;
  const auto k = config.num_classes;
  const auto specs = models::default_specs(source_x.cols(), k, spec.conditioning, config.g_hidden, config.d_hidden);
  TrainResult result;
  auto& net = result.model;
  net = models::build_triplet(specs.g, specs.f, specs.d, init_seed(config.seed, spec.stream), spec.conditioning);

  if (spec.adversary && (!target || target->size() == 0)) throw ContractError("training: target data required");
  if (spec.adversary && target->dim() != source_x.cols()) {
    throw ContractError("training: source width " + std::to_string(source_x.cols()) + " but target width " +
                        std::to_string(target->dim()));
  }

  std::vector<double> dataset_priors;
  if (config.prior_mode == PriorMode::dataset && spec.loss == LossKind::complementary) {
    dataset_priors.assign(static_cast<std::size_t>(k), 0.0);
    for (int y : labels) dataset_priors[static_cast<std::size_t>(y)] += 1.0 / static_cast<double>(labels.size());
  }

  Sgd classifier_opt(net.classifier_parameters(), config.lr_classifier, config.momentum, config.weight_decay);
  auto all_params = net.classifier_parameters();
  for (auto* p : net.discriminator_parameters()) all_params.push_back(p);
  Sgd adversarial_opt(all_params, config.lr_adversarial, config.momentum, config.weight_decay);

  auto src_rng = stream_rng(config.seed, 200 + spec.stream);
  auto tgt_rng = stream_rng(config.seed, 300 + spec.stream);
  const auto start = clock::now();
  ad::Tape tape;

  for (int t = 1; t <= config.epochs; ++t) {
    const auto src_batches = data::epoch_batches(source_x.rows(), config.batch_size, src_rng);
    std::vector<std::vector<std::size_t>> tgt_batches;
    if (spec.adversary) tgt_batches = data::epoch_batches(target->size(), config.batch_size, tgt_rng);
    const auto n_iter = spec.adversary ? std::min(src_batches.size(), tgt_batches.size()) : src_batches.size();

    const bool adversarial_epoch = spec.adversary && t > config.adversarial_start;
    const double lambda =
        adversarial_epoch ? lambda_schedule(static_cast<double>(t - config.adversarial_start) /
                                                static_cast<double>(config.epochs - config.adversarial_start),
                                            config.lambda_gamma)
                          : 0.0;

    MetricsRecord rec;
    rec.epoch = t + spec.epoch_offset;
    rec.lambda = lambda;
    rec.min_comp_loss = std::numeric_limits<double>::infinity();
    double adv_sum = 0.0;

    for (std::size_t it = 0; it < n_iter; ++it) {
      const auto& batch = src_batches[it];
      try {
        // Classifier update: descent on the total loss, or ascent on L_neg.
        tape.reset();
        const Tensor xs = source_x.gather_rows(batch);
        std::vector<int> batch_labels(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) batch_labels[i] = labels[batch[i]];

        auto logits = net.f.forward(net.g.forward(tape.constant(xs)));
        auto log_probs = losses::log_probabilities(logits);
        ClassifierStep step{rec.epoch, it, Branch::descent, {}, 0.0, batch};
        ad::Var objective;
        if (spec.loss == LossKind::cross_entropy) {
          objective = losses::cross_entropy(log_probs, batch_labels);
          step.total = objective.value().item();
        } else {
          const auto part = complabel::partition_batch(batch_labels, k);
          auto br = losses::total_comp_loss(log_probs, part, dataset_priors);
          step.per_class = br.per_class;
          step.total = br.total_value;
          rec.l_neg += br.l_neg;
          if (br.min_class >= 0.0 || !config.negative_correction) {
            objective = br.total;
          } else {
            objective = br.l_neg_node;
            step.branch = Branch::ascent;
          }
        }
        tape.backward(objective);
        if (observer && observer->before_classifier_step) observer->before_classifier_step(step, net);
        if (step.branch == Branch::ascent) {
          ++rec.ascent_steps;
          classifier_opt.step(-1.0);
        } else {
          classifier_opt.step(1.0);
        }
        if (observer && observer->after_classifier_step) observer->after_classifier_step(step, net);
        rec.comp_loss += step.total;
        rec.min_comp_loss = std::min(rec.min_comp_loss, step.total);

        if (!adversarial_epoch) continue;

        // Adversarial update. With the likelihood sign D ascends L_adv and the
        // reversal node turns that into descent for F o G.
        tape.reset();
        const Tensor xt = target->features.gather_rows(tgt_batches[it]);
        const auto ns = xs.rows();
        auto x = ad::concat_rows(tape.constant(xs), tape.constant(xt));
        auto g = net.g.forward(x);
        ad::Var h;
        std::vector<double> w;
        if (spec.conditioning == models::Conditioning::conditional) {
          auto probs = ad::softmax(net.f.forward(g));
          auto mapped = spec.apply_map ? ad::scatter_map(probs, config.scatter_l) : probs;
          w = losses::entropy_weights(mapped.value());
          h = ad::outer_flatten(g, mapped);
        } else {
          w.assign(x.rows(), 1.0);
          h = g;
        }
        auto z = net.d.forward(ad::grad_reverse(h, lambda));
        auto adv = losses::adversarial_loss(ad::slice_rows(z, 0, ns), std::span(w).subspan(0, ns),
                                            ad::slice_rows(z, ns, z.rows()), std::span(w).subspan(ns));
        tape.backward(adv);
        adversarial_opt.step(config.adversarial_sign == AdversarialSign::likelihood ? -1.0 : 1.0);
        adv_sum += adv.value().item();
        if (observer && observer->after_adversarial_step) observer->after_adversarial_step(rec.epoch, it, net);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(rec.epoch) + ", iteration " + std::to_string(it + 1) + ": " +
                           e.what());
      }
    }

    rec.iterations = n_iter;
    const double n = static_cast<double>(n_iter);
    rec.comp_loss /= n;
    rec.l_neg /= n;
    if (adversarial_epoch) rec.adv_loss = adv_sum / n;
    if (eval_target) rec.target_acc = evaluate(net, *eval_target);
    rec.seconds = config.record_wall_clock ? std::chrono::duration<double>(clock::now() - start).count() : 0.0;
    result.metrics.push_back(rec);
  }
  return result;
}

}  // namespace

TrainResult train_clarinet(const complabel::ComplementaryDataset& source, const data::UnlabeledDataset& target,
                           const TrainConfig& config, const data::LabeledDataset* eval_target,
                           const Observer* observer) {
  check_source(source, config);
  LoopSpec spec;
  switch (config.variant) {
    case Variant::clarinet: break;
    case Variant::ablation_ce: spec.loss = LossKind::cross_entropy; break;
    case Variant::ablation_no_t: spec.apply_map = false; break;
    default:
      throw ContractError("train_clarinet: variant '" + std::string(to_string(config.variant)) +
                          "' is not a one-step variant");
  }
  return run_loop(source.features(), source.comp_labels(), &target, config, spec, eval_target, observer);
}

TrainResult train_gac(const complabel::ComplementaryDataset& source, const TrainConfig& config,
                      const data::LabeledDataset* eval_target, const Observer* observer) {
  check_source(source, config);
  LoopSpec spec;
  spec.adversary = false;
  return run_loop(source.features(), source.comp_labels(), nullptr, config, spec, eval_target, observer);
}

TrainResult train_two_step(const complabel::ComplementaryDataset& source, const data::UnlabeledDataset& target,
                           const TrainConfig& config, const data::LabeledDataset* eval_target,
                           const Observer* observer) {
  check_source(source, config);
  auto stage1 = train_gac(source, config, eval_target, observer);
  const auto pseudo = models::pseudo_label(stage1.model, source.features());

  std::optional<double> noise;
  if (source.has_hidden_labels()) {
    const auto truth = source.hidden_true_labels(complabel::EvaluationKey::grant("two-step pseudo-label noise"));
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pseudo.size(); ++i) wrong += pseudo[i] != truth[i];
    noise = static_cast<double>(wrong) / static_cast<double>(pseudo.size());
  }

  LoopSpec spec;
  spec.loss = LossKind::cross_entropy;
  spec.conditioning = models::Conditioning::feature_only;
  spec.apply_map = false;
  spec.stream = 1;
  spec.epoch_offset = config.epochs;
  auto stage2 = run_loop(source.features(), pseudo, &target, config, spec, eval_target, observer);

  TrainResult out;
  out.model = std::move(stage2.model);
  out.metrics = std::move(stage1.metrics);
  const double stage1_seconds = out.metrics.empty() ? 0.0 : out.metrics.back().seconds;
  for (auto& r : stage2.metrics) {
    r.seconds += stage1_seconds;
    out.metrics.push_back(r);
  }
  out.pseudo_label_noise = noise;
  return out;
}

TrainResult run_variant(const complabel::ComplementaryDataset& source, const data::UnlabeledDataset& target,
                        const TrainConfig& config, const data::LabeledDataset* eval_target,
                        const Observer* observer) {
  switch (config.variant) {
    case Variant::gac: return train_gac(source, config, eval_target, observer);
    case Variant::two_step: return train_two_step(source, target, config, eval_target, observer);
    default: return train_clarinet(source, target, config, eval_target, observer);
  }
}

}  // namespace clarinet::train
