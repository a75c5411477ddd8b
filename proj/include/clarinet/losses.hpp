#pragma once

#include <span>
#include <vector>

#include "clarinet/autodiff.hpp"
#include "clarinet/complabel.hpp"

namespace clarinet::losses {

/// Clamped log-probabilities of a batch of logits (floor ln 1e-12).
ad::Var log_probabilities(ad::Var logits);
/// Clamped log of probabilities that are already normalized.
ad::Var log_of_probabilities(ad::Var probs);

/// Complementary-label loss restricted to class k (0-based):
///
///   -(K-1) * pi_k / n_k * sum_{i in d_k} l(p_i, k)
///   + sum_j pi_j / n_j * sum_{i in d_j} l(p_i, k)
///
/// with l the cross-entropy against class k. Classes with n_j = 0 contribute
/// nothing. `priors` overrides the per-batch priors of the partition (used for
/// dataset-level priors); empty means per-batch.
ad::Var class_comp_loss(ad::Var log_probs, const complabel::BatchPartition& partition, int k,
                        std::span<const double> priors = {});

struct CompLossBreakdown {
  std::vector<ad::Var> per_class_nodes;
  std::vector<double> per_class;
  ad::Var total;
  double total_value = 0.0;
  double min_class = 0.0;
  /// Sum of the negative per-class entries (<= 0).
  double l_neg = 0.0;
  /// Tape node for l_neg; only valid when l_neg < 0.
  ad::Var l_neg_node;
};

CompLossBreakdown total_comp_loss(ad::Var log_probs, const complabel::BatchPartition& partition,
                                  std::span<const double> priors = {});

/// Mean cross-entropy of `log_probs` against `labels`.
ad::Var cross_entropy(ad::Var log_probs, std::span<const int> labels);

struct EntropyWeight {
  double entropy;
  double omega;
};

/// H = -sum p ln p (0 ln 0 = 0) and omega = 1 + exp(-H).
EntropyWeight entropy_weight(std::span<const double> mapped);
/// omega for every row.
std::vector<double> entropy_weights(const Tensor& mapped);

/// Weighted domain log-likelihood of the discriminator, written in terms of its
/// logits z (D = sigmoid(z), clamped to [1e-12, 1 - 1e-12]):
///
///   sum_s w_s ln D(z_s) / sum_s w_s + sum_t w_t ln(1 - D(z_t)) / sum_t w_t
///
/// Weights are constants.
ad::Var adversarial_loss(ad::Var source_logits, std::span<const double> source_weights, ad::Var target_logits,
                         std::span<const double> target_weights);

/// Logit of a probability, for feeding known discriminator outputs.
double logit(double p);

}  // namespace clarinet::losses
