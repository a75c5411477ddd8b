#include "clarinet/complabel.hpp"

#include <atomic>
#include <cmath>
#include <numeric>

#include "clarinet/error.hpp"

namespace clarinet::complabel {

namespace {
std::atomic<std::size_t> g_grants{0};
}  // namespace

TransitionMatrix transition_matrix(int num_classes) {
  if (num_classes < 2) throw ContractError("transition_matrix: K must be >= 2, got " + std::to_string(num_classes));
  const auto k = static_cast<std::size_t>(num_classes);
  TransitionMatrix t{num_classes, Tensor(k, k), Tensor(k, k)};
  const double off = 1.0 / static_cast<double>(num_classes - 1);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      t.q(i, j) = i == j ? 0.0 : off;
      t.q_inv(i, j) = i == j ? -static_cast<double>(num_classes - 2) : 1.0;
    }
  }
  return t;
}

EvaluationKey EvaluationKey::grant(std::string_view) {
  ++g_grants;
  return EvaluationKey();
}

std::size_t hidden_label_grants() { return g_grants.load(); }

ComplementaryDataset::ComplementaryDataset(Tensor features, std::vector<int> comp_labels, int num_classes,
                                           std::string name, std::optional<std::vector<int>> hidden)
    : features_(std::move(features)),
      comp_labels_(std::move(comp_labels)),
      num_classes_(num_classes),
      name_(std::move(name)),
      hidden_(std::move(hidden)) {
  if (num_classes_ < 2) throw ContractError("ComplementaryDataset: K must be >= 2");
  if (features_.rows() != comp_labels_.size()) {
    throw ContractError("ComplementaryDataset: " + std::to_string(features_.rows()) + " feature rows but " +
                        std::to_string(comp_labels_.size()) + " labels");
  }
  for (int c : comp_labels_) {
    if (c < 0 || c >= num_classes_) throw ContractError("ComplementaryDataset: label out of range");
  }
  if (hidden_) {
    if (hidden_->size() != comp_labels_.size()) throw ContractError("ComplementaryDataset: hidden label count mismatch");
    for (std::size_t i = 0; i < hidden_->size(); ++i) {
      if ((*hidden_)[i] == comp_labels_[i]) {
        throw ContractError("ComplementaryDataset: sample " + std::to_string(i) +
                            " has complementary label equal to its true label");
      }
    }
  }
}

std::span<const int> ComplementaryDataset::hidden_true_labels(const EvaluationKey&) const {
  if (!hidden_) throw ContractError("ComplementaryDataset: no hidden labels attached");
  return *hidden_;
}

int draw_complementary(int true_label, int num_classes, std::mt19937_64& rng) {
  if (num_classes < 2) throw ContractError("draw_complementary: K must be >= 2");
  if (true_label < 0 || true_label >= num_classes) throw ContractError("draw_complementary: label out of range");
  std::uniform_int_distribution<int> pick(0, num_classes - 2);
  const int r = pick(rng);
  return r < true_label ? r : r + 1;
}

ComplementaryDataset generate_complementary(const data::LabeledDataset& ds, std::mt19937_64& rng) {
  if (ds.num_classes < 2) throw ContractError("generate_complementary: K must be >= 2");
  ds.validate();
  std::vector<int> comp(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) comp[i] = draw_complementary(ds.labels[i], ds.num_classes, rng);
  return ComplementaryDataset(ds.features, std::move(comp), ds.num_classes, ds.name, ds.labels);
}

std::vector<double> recover_posterior(std::span<const double> eta_bar) {
  const auto k = eta_bar.size();
  if (k < 2) throw ContractError("recover_posterior: need at least 2 classes");
  double s = 0.0;
  for (double v : eta_bar) {
    if (v < -1e-8 || !std::isfinite(v)) throw ContractError("recover_posterior: negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-8) throw ContractError("recover_posterior: entries sum to " + std::to_string(s));
  std::vector<double> eta(k);
  const double km1 = static_cast<double>(k - 1);
  for (std::size_t i = 0; i < k; ++i) eta[i] = 1.0 - km1 * eta_bar[i];
  return eta;
}

BatchPartition partition_batch(std::span<const int> comp_labels, int num_classes) {
  if (comp_labels.empty()) throw ContractError("partition_batch: empty minibatch");
  if (num_classes < 2) throw ContractError("partition_batch: K must be >= 2");
  const auto k = static_cast<std::size_t>(num_classes);
  BatchPartition p;
  p.num_classes = num_classes;
  p.batch_size = comp_labels.size();
  p.subsets.resize(k);
  for (std::size_t i = 0; i < comp_labels.size(); ++i) {
    const int c = comp_labels[i];
    if (c < 0 || c >= num_classes) throw ContractError("partition_batch: label " + std::to_string(c) + " out of range");
    p.subsets[static_cast<std::size_t>(c)].push_back(i);
  }
  p.counts.resize(k);
  p.priors.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    p.counts[c] = p.subsets[c].size();
    p.priors[c] = static_cast<double>(p.counts[c]) / static_cast<double>(p.batch_size);
  }
  return p;
}

}  // namespace clarinet::complabel
