#include "clarinet/losses.hpp"

#include <algorithm>
#include <cmath>

#include "clarinet/error.hpp"

namespace clarinet::losses {

ad::Var log_probabilities(ad::Var logits) { return ad::log_softmax(logits, ad::log_prob_floor()); }

ad::Var log_of_probabilities(ad::Var probs) { return ad::log(probs, ad::kProbFloor); }

namespace {

void check_inputs(ad::Var log_probs, const complabel::BatchPartition& p, std::span<const double> priors) {
  if (log_probs.cols() != static_cast<std::size_t>(p.num_classes)) {
    throw ContractError("comp loss: predictions have " + std::to_string(log_probs.cols()) + " columns but K=" +
                        std::to_string(p.num_classes));
  }
  if (log_probs.rows() != p.batch_size) throw ContractError("comp loss: partition does not match batch size");
  if (!priors.empty() && priors.size() != static_cast<std::size_t>(p.num_classes)) {
    throw ContractError("comp loss: priors must have K entries");
  }
}

}  // namespace

ad::Var class_comp_loss(ad::Var log_probs, const complabel::BatchPartition& p, int k,
                        std::span<const double> priors) {
  if (k < 0 || k >= p.num_classes) {
    throw ContractError("class_comp_loss: class " + std::to_string(k) + " out of range for K=" +
                        std::to_string(p.num_classes));
  }
  check_inputs(log_probs, p, priors);
  const auto kk = static_cast<std::size_t>(k);
  const double km1 = static_cast<double>(p.num_classes - 1);
  // loss = sum_i c_i * l(p_i, k) = sum_i -c_i * log p_ik
  Tensor coeffs(p.batch_size, static_cast<std::size_t>(p.num_classes));
  for (std::size_t j = 0; j < p.subsets.size(); ++j) {
    if (p.counts[j] == 0) continue;
    const double prior = priors.empty() ? p.priors[j] : priors[j];
    double c = prior / static_cast<double>(p.counts[j]);
    if (j == kk) c *= 1.0 - km1;
    for (auto i : p.subsets[j]) coeffs(i, kk) = -c;
  }
  return ad::linear_combination(log_probs, coeffs);
}

CompLossBreakdown total_comp_loss(ad::Var log_probs, const complabel::BatchPartition& p,
                                  std::span<const double> priors) {
  CompLossBreakdown b;
  for (int k = 0; k < p.num_classes; ++k) {
    auto node = class_comp_loss(log_probs, p, k, priors);
    b.per_class.push_back(node.value().item());
    b.per_class_nodes.push_back(node);
  }
  b.total = b.per_class_nodes.front();
  for (std::size_t k = 1; k < b.per_class_nodes.size(); ++k) b.total = ad::add(b.total, b.per_class_nodes[k]);
  b.total_value = b.total.value().item();
  b.min_class = *std::min_element(b.per_class.begin(), b.per_class.end());
  for (std::size_t k = 0; k < b.per_class.size(); ++k) {
    if (b.per_class[k] >= 0.0) continue;
    b.l_neg += b.per_class[k];
    b.l_neg_node = b.l_neg_node.valid() ? ad::add(b.l_neg_node, b.per_class_nodes[k]) : b.per_class_nodes[k];
  }
  return b;
}

ad::Var cross_entropy(ad::Var log_probs, std::span<const int> labels) {
  if (labels.size() != log_probs.rows()) throw ContractError("cross_entropy: label count does not match batch");
  Tensor coeffs(log_probs.rows(), log_probs.cols());
  const double w = -1.0 / static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= log_probs.cols()) {
      throw ContractError("cross_entropy: label out of range");
    }
    coeffs(i, static_cast<std::size_t>(labels[i])) = w;
  }
  return ad::linear_combination(log_probs, coeffs);
}

EntropyWeight entropy_weight(std::span<const double> mapped) {
  double h = 0.0;
  for (double p : mapped) {
    if (p > 0.0) h -= p * std::log(p);
  }
  h = std::max(h, 0.0);
  return {h, 1.0 + std::exp(-h)};
}

std::vector<double> entropy_weights(const Tensor& mapped) {
  std::vector<double> w(mapped.rows());
  for (std::size_t i = 0; i < mapped.rows(); ++i) w[i] = entropy_weight(mapped.row_span(i)).omega;
  return w;
}

ad::Var adversarial_loss(ad::Var source_logits, std::span<const double> source_weights, ad::Var target_logits,
                         std::span<const double> target_weights) {
  if (source_logits.rows() == 0 || target_logits.rows() == 0 || source_weights.empty() || target_weights.empty()) {
    throw ContractError("adversarial_loss: both domains need at least one sample");
  }
  if (source_logits.cols() != 1 || target_logits.cols() != 1) {
    throw ContractError("adversarial_loss: discriminator output must be one column");
  }
  if (source_weights.size() != source_logits.rows() || target_weights.size() != target_logits.rows()) {
    throw ContractError("adversarial_loss: weight count does not match sample count");
  }
  auto normalized = [](std::span<const double> w) {
    double s = 0.0;
    for (double v : w) s += v;
    if (!(s > 0.0)) throw ContractError("adversarial_loss: weights must sum to a positive value");
    std::vector<double> out(w.begin(), w.end());
    for (auto& v : out) v /= s;
    const std::size_t n = out.size();
    return Tensor::matrix(n, 1, std::move(out));
  };
  const double floor = ad::log_prob_floor();
  auto log_d = ad::log_sigmoid(source_logits, floor);
  auto log_one_minus_d = ad::log_sigmoid(ad::scale(target_logits, -1.0), floor);
  return ad::add(ad::linear_combination(log_d, normalized(source_weights)),
                 ad::linear_combination(log_one_minus_d, normalized(target_weights)));
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError("logit: probability must be in (0,1)");
  return std::log(p) - std::log1p(-p);
}

}  // namespace clarinet::losses
