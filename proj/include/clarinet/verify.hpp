#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "clarinet/tensor.hpp"

namespace clarinet::verify {

/// m feature points with known class posteriors and marginal weights.
struct DiscreteDomain {
  Tensor posterior;             // m x K, rows on the simplex
  std::vector<double> marginal;  // m weights on the simplex

  std::size_t points() const { return marginal.size(); }
  int num_classes() const { return static_cast<int>(posterior.cols()); }
  /// Throws ContractError when a row or the marginal is off the simplex by more than 1e-12.
  void validate() const;
};

/// Random domain with Dirichlet(1) posteriors and marginal.
DiscreteDomain random_domain(std::size_t points, int num_classes, std::mt19937_64& rng);
/// Random m x K predictor table with Dirichlet(1) rows.
Tensor random_predictor(std::size_t points, int num_classes, std::mt19937_64& rng);

struct UnbiasednessResult {
  double true_risk = 0.0;
  /// Closed form: sum_x w sum_k l(k) - (K-1) sum_x w sum_k Pbar(k|x) l(k), Pbar = Q P.
  double rewritten_risk = 0.0;
  /// The same expectation evaluated through total_comp_loss, one single-sample
  /// batch per (x, ybar) cell. Equals rewritten_risk unless enumerated = false.
  double loss_route_risk = 0.0;
  double gap = 0.0;  // largest disagreement with true_risk
  bool enumerated = true;
};

/// Cells beyond this fall back to a Monte-Carlo estimate for the loss route.
inline constexpr std::size_t kEnumerationCap = 10000;

UnbiasednessResult exact_unbiasedness(const DiscreteDomain& domain, const Tensor& predictor);

struct MonteCarloResult {
  double empirical = 0.0;  // total_comp_loss over the whole sample as one batch
  double true_risk = 0.0;
  double std_error = 0.0;
  double z = 0.0;
};

/// Draws n pairs (x, ybar) from the complementary law and standardizes the
/// empirical loss against the true risk. n >= 1000.
MonteCarloResult monte_carlo_unbiasedness(const DiscreteDomain& domain, const Tensor& predictor, std::size_t n,
                                          std::uint64_t seed);

struct Check {
  std::string name;
  std::string metric;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const;
  std::string to_json() const;
};

/// Central differences (step 1e-5) against the tape for every op in
/// ad::differentiable_ops() plus the composite losses. One check per entry,
/// metric = max relative error, threshold 1e-4.
Report gradcheck_suite(std::uint64_t seed = 0);

/// Exact enumeration over random (domain, predictor) pairs for K in {2,3,5,10}.
Report unbiasedness_suite(std::uint64_t seed = 0, int pairs_per_k = 100);

/// Monte-Carlo comparison, K = 4.
Report monte_carlo_suite(std::uint64_t seed = 0, std::size_t samples = 100000);

/// Properties of the scattering map over `points` random simplex points.
Report tmap_suite(std::uint64_t seed = 0, std::size_t points = 10000);

/// Transition-matrix algebra for K = 2..max_k.
Report q_algebra_suite(int max_k = 100);

/// "unbiasedness" (exact and Monte-Carlo), "gradcheck", "tmap", or "all"
/// (also runs the Q algebra checks). Unknown names throw ContractError.
Report run_suite(std::string_view name, std::uint64_t seed = 0);

}  // namespace clarinet::verify
