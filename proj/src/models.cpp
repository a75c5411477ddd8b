#include "clarinet/models.hpp"

#include <cmath>

#include "clarinet/error.hpp"

namespace clarinet::models {

Mlp::Mlp(std::string name, NetworkSpec spec, std::mt19937_64& rng) : name_(std::move(name)), spec_(std::move(spec)) {
  if (spec_.widths.size() < 2) throw ContractError(name_ + ": a network needs at least two widths");
  for (auto w : spec_.widths) {
    if (w == 0) throw ContractError(name_ + ": zero layer width");
  }
  params_.reserve(2 * (spec_.widths.size() - 1));
  for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    const auto fan_in = spec_.widths[l];
    const auto fan_out = spec_.widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor w(fan_in, fan_out);
    for (auto& v : w.values()) v = u(rng);
    params_.emplace_back(name_ + ".W" + std::to_string(l), std::move(w));
    params_.emplace_back(name_ + ".b" + std::to_string(l), Tensor(1, fan_out));
  }
}

ad::Var Mlp::forward(ad::Var x) {
  auto& tape = x.tape();
  const auto layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    x = ad::affine(x, tape.parameter(params_[2 * l]), tape.parameter(params_[2 * l + 1]));
    if (l + 1 < layers) x = ad::relu(x);
  }
  return x;
}

ad::Var Mlp::forward_frozen(ad::Var x) const {
  auto& tape = x.tape();
  const auto layers = params_.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    x = ad::affine(x, tape.constant(params_[2 * l].value), tape.constant(params_[2 * l + 1].value));
    if (l + 1 < layers) x = ad::relu(x);
  }
  return x;
}

std::vector<ad::Parameter*> Mlp::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const ad::Parameter*> Mlp::parameters() const {
  std::vector<const ad::Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<ad::Parameter*> NetworkTriplet::classifier_parameters() {
  auto out = g.parameters();
  for (auto* p : f.parameters()) out.push_back(p);
  return out;
}

std::vector<ad::Parameter*> NetworkTriplet::discriminator_parameters() { return d.parameters(); }

TripletSpecs default_specs(std::size_t input_dim, int num_classes, Conditioning c, std::vector<std::size_t> g_hidden,
                           std::vector<std::size_t> d_hidden) {
  if (g_hidden.empty()) throw ContractError("default_specs: G needs at least one hidden width");
  TripletSpecs s;
  s.g.widths = {input_dim};
  s.g.widths.insert(s.g.widths.end(), g_hidden.begin(), g_hidden.end());
  s.g.head = Head::none;
  const auto dg = g_hidden.back();
  s.f = {{dg, static_cast<std::size_t>(num_classes)}, Head::softmax};
  s.d.widths = {c == Conditioning::conditional ? dg * static_cast<std::size_t>(num_classes) : dg};
  s.d.widths.insert(s.d.widths.end(), d_hidden.begin(), d_hidden.end());
  s.d.widths.push_back(1);
  s.d.head = Head::sigmoid;
  return s;
}

NetworkTriplet build_triplet(const NetworkSpec& g, const NetworkSpec& f, const NetworkSpec& d, std::uint64_t seed,
                             Conditioning c) {
  auto junction = [](const std::string& where, std::size_t a, std::size_t b) {
    if (a != b) {
      throw ContractError("build_triplet: width mismatch at " + where + " (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
    }
  };
  if (g.widths.size() < 2 || f.widths.size() < 2 || d.widths.size() < 2) {
    throw ContractError("build_triplet: every network needs at least two widths");
  }
  junction("G output -> F input", g.output_width(), f.input_width());
  if (f.output_width() < 2) throw ContractError("build_triplet: F must output K >= 2 classes");
  const auto expected_d = c == Conditioning::conditional ? g.output_width() * f.output_width() : g.output_width();
  junction(c == Conditioning::conditional ? "G(x) (x) T(F(G(x))) -> D input" : "G output -> D input",
           expected_d, d.input_width());
  junction("D output", d.output_width(), 1);
  if (f.head != Head::softmax) throw ContractError("build_triplet: F must have a softmax head");
  if (d.head != Head::sigmoid) throw ContractError("build_triplet: D must have a sigmoid head");

  std::mt19937_64 rng(seed);
  NetworkTriplet t;
  t.g = Mlp("G", g, rng);
  t.f = Mlp("F", f, rng);
  t.d = Mlp("D", d, rng);
  t.conditioning = c;
  return t;
}

ad::Var conditional_feature(ad::Var g, ad::Var f, double l, bool apply_map) {
  return ad::outer_flatten(g, apply_map ? ad::scatter_map(f, l) : f);
}

Tensor predict(const NetworkTriplet& net, const Tensor& features) {
  if (features.cols() != net.g.spec().input_width()) {
    throw ContractError("predict: feature width " + std::to_string(features.cols()) + " but G expects " +
                        std::to_string(net.g.spec().input_width()));
  }
  ad::Tape tape;
  auto x = tape.constant(features);
  return ad::softmax(net.f.forward_frozen(net.g.forward_frozen(x))).value();
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto r = probs.row_span(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j) {
      if (r[j] > r[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> pseudo_label(const NetworkTriplet& net, const Tensor& features) {
  return argmax_rows(predict(net, features));
}

}  // namespace clarinet::models
