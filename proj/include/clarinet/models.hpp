#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "clarinet/autodiff.hpp"

namespace clarinet::models {

enum class Head : std::uint8_t { none = 0, softmax = 1, sigmoid = 2 };

/// Fully connected stack: affine layers between consecutive widths, relu
/// between hidden layers, and a declared output head.
struct NetworkSpec {
  std::vector<std::size_t> widths;
  Head head = Head::none;

  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

class Mlp {
 public:
  Mlp() = default;
  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  Mlp(std::string name, NetworkSpec spec, std::mt19937_64& rng);

  /// Pre-head output (logits) with parameters bound as trainable leaves.
  ad::Var forward(ad::Var x);
  /// Same computation with parameters bound as constants.
  ad::Var forward_frozen(ad::Var x) const;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  const NetworkSpec& spec() const { return spec_; }
  const std::string& name() const { return name_; }

 private:
  friend class CheckpointAccess;
  std::string name_;
  NetworkSpec spec_;
  std::vector<ad::Parameter> params_;  // W0, b0, W1, b1, ...
};

/// How the discriminator sees a sample: the flattened outer product of feature
/// and (mapped) prediction, or the feature alone.
enum class Conditioning : std::uint8_t { conditional = 0, feature_only = 1 };

/// Feature extractor G, label predictor F and domain discriminator D.
struct NetworkTriplet {
  Mlp g, f, d;
  Conditioning conditioning = Conditioning::conditional;

  int num_classes() const { return static_cast<int>(f.spec().output_width()); }
  std::vector<ad::Parameter*> classifier_parameters();  // theta_{F o G}
  std::vector<ad::Parameter*> discriminator_parameters();  // theta_D
};

/// G = [d, 128, 64], F = [64, K], D = [64*K, 64, 1] (or [64, 64, 1] for
/// feature-only conditioning).
struct TripletSpecs {
  NetworkSpec g, f, d;
};
TripletSpecs default_specs(std::size_t input_dim, int num_classes, Conditioning c = Conditioning::conditional,
                           std::vector<std::size_t> g_hidden = {128, 64}, std::vector<std::size_t> d_hidden = {64});

/// Throws ContractError naming the junction when widths do not conform.
NetworkTriplet build_triplet(const NetworkSpec& g, const NetworkSpec& f, const NetworkSpec& d, std::uint64_t seed,
                             Conditioning c = Conditioning::conditional);

/// outer_flatten(g, T(f)) when `apply_map`, else outer_flatten(g, f).
ad::Var conditional_feature(ad::Var g, ad::Var f, double l, bool apply_map = true);

/// Row-stochastic class probabilities of F o G.
Tensor predict(const NetworkTriplet& net, const Tensor& features);
/// argmax of predict, ties to the smallest index.
std::vector<int> pseudo_label(const NetworkTriplet& net, const Tensor& features);
std::vector<int> argmax_rows(const Tensor& probs);

// --- checkpoints ------------------------------------------------------------------

void save_checkpoint(const NetworkTriplet& net, const std::filesystem::path& path, const std::string& metadata = {});
NetworkTriplet load_checkpoint(const std::filesystem::path& path, std::string* metadata = nullptr);

}  // namespace clarinet::models
