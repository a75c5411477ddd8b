#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clarinet/data.hpp"
#include "clarinet/tensor.hpp"

namespace clarinet::complabel {

/// Q maps true-class posteriors to complementary-class posteriors under the
/// uniform assumption: zero diagonal, 1/(K-1) elsewhere. Its inverse has
/// -(K-2) on the diagonal and 1 elsewhere.
struct TransitionMatrix {
  int num_classes;
  Tensor q;
  Tensor q_inv;
};

TransitionMatrix transition_matrix(int num_classes);

/// Passkey for reading hidden true labels. Every grant is counted so tests can
/// audit that training code never asks for one.
class EvaluationKey {
 public:
  static EvaluationKey grant(std::string_view purpose);

 private:
  EvaluationKey() = default;
};

std::size_t hidden_label_grants();

class ComplementaryDataset {
 public:
  ComplementaryDataset(Tensor features, std::vector<int> comp_labels, int num_classes, std::string name,
                       std::optional<std::vector<int>> hidden_true_labels = std::nullopt);

  const Tensor& features() const { return features_; }
  std::span<const int> comp_labels() const { return comp_labels_; }
  int num_classes() const { return num_classes_; }
  const std::string& name() const { return name_; }
  std::size_t size() const { return comp_labels_.size(); }
  std::size_t dim() const { return features_.cols(); }

  bool has_hidden_labels() const { return hidden_.has_value(); }
  std::span<const int> hidden_true_labels(const EvaluationKey&) const;

 private:
  Tensor features_;
  std::vector<int> comp_labels_;
  int num_classes_;
  std::string name_;
  std::optional<std::vector<int>> hidden_;
};

/// Draws one complementary label per sample uniformly from the K-1 classes
/// other than its true label. The true labels stay attached as hidden labels.
ComplementaryDataset generate_complementary(const data::LabeledDataset& ds, std::mt19937_64& rng);

/// Uniform draw from {0..K-1} \ {true_label}.
int draw_complementary(int true_label, int num_classes, std::mt19937_64& rng);

/// eta_k = 1 - (K-1) * eta_bar_k. Throws when eta_bar is off the simplex by
/// more than 1e-8.
std::vector<double> recover_posterior(std::span<const double> eta_bar);

struct BatchPartition {
  int num_classes = 0;
  std::size_t batch_size = 0;
  /// Positions within the minibatch, grouped by complementary label.
  std::vector<std::vector<std::size_t>> subsets;
  std::vector<std::size_t> counts;
  /// counts[k] / batch_size
  std::vector<double> priors;
};

BatchPartition partition_batch(std::span<const int> comp_labels, int num_classes);

}  // namespace clarinet::complabel
