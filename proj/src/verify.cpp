#include "clarinet/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "clarinet/autodiff.hpp"
#include "clarinet/complabel.hpp"
#include "clarinet/error.hpp"
#include "clarinet/losses.hpp"

namespace clarinet::verify {

namespace {

using clock = std::chrono::steady_clock;

std::vector<double> dirichlet(std::size_t k, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(k);
  double s = 0.0;
  for (auto& x : v) s += (x = e(rng));
  for (auto& x : v) x /= s;
  return v;
}

void check_simplex(std::span<const double> row, const char* what) {
  double s = 0.0;
  for (double v : row) {
    if (!(v >= -1e-12)) throw ContractError(std::string(what) + ": negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) throw ContractError(std::string(what) + ": row sums to " + std::to_string(s));
}

double loss_of(double p) { return -std::log(std::max(p, ad::kProbFloor)); }

double true_risk(const DiscreteDomain& d, const Tensor& pred) {
  const auto K = static_cast<std::size_t>(d.num_classes());
  double r = 0.0;
  for (std::size_t x = 0; x < d.points(); ++x) {
    for (std::size_t y = 0; y < K; ++y) r += d.marginal[x] * d.posterior(x, y) * loss_of(pred(x, y));
  }
  return r;
}

// Pbar(k|x) = sum_y Q[y][k] P(y|x), Q with zero diagonal and 1/(K-1) elsewhere.
Tensor complementary_posterior(const DiscreteDomain& d) {
  const int K = d.num_classes();
  const auto tm = complabel::transition_matrix(K);
  Tensor out(d.points(), static_cast<std::size_t>(K), 0.0);
  for (std::size_t x = 0; x < d.points(); ++x) {
    for (int k = 0; k < K; ++k) {
      double s = 0.0;
      for (int y = 0; y < K; ++y) s += tm.q(static_cast<std::size_t>(y), static_cast<std::size_t>(k)) * d.posterior(x, y);
      out(x, static_cast<std::size_t>(k)) = s;
    }
  }
  return out;
}

// Per-sample term of the empirical loss: sum_k l(k) - (K-1) l(ybar).
double sample_term(const Tensor& pred, std::size_t x, int ybar) {
  const auto K = pred.cols();
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) s += loss_of(pred(x, k));
  return s - static_cast<double>(K - 1) * loss_of(pred(x, static_cast<std::size_t>(ybar)));
}

double loss_route(const Tensor& pred, std::span<const std::size_t> xs, std::span<const int> comp) {
  ad::Tape tape;
  const int K = static_cast<int>(pred.cols());
  auto lp = losses::log_of_probabilities(tape.constant(pred.gather_rows(xs)));
  const auto part = complabel::partition_batch(comp, K);
  return losses::total_comp_loss(lp, part).total_value;
}

struct Sample {
  std::vector<std::size_t> xs;
  std::vector<int> comp;
};

Sample draw(const DiscreteDomain& d, std::size_t n, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> px(d.marginal.begin(), d.marginal.end());
  const int K = d.num_classes();
  std::vector<std::discrete_distribution<int>> py;
  for (std::size_t x = 0; x < d.points(); ++x) {
    auto row = d.posterior.row_span(x);
    py.emplace_back(row.begin(), row.end());
  }
  Sample s;
  s.xs.resize(n);
  s.comp.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = px(rng);
    s.xs[i] = x;
    s.comp[i] = complabel::draw_complementary(py[x](rng), K, rng);
  }
  return s;
}

}  // namespace

void DiscreteDomain::validate() const {
  if (posterior.rows() != marginal.size() || marginal.empty()) {
    throw ContractError("DiscreteDomain: posterior rows and marginal size differ");
  }
  if (posterior.cols() < 2) throw ContractError("DiscreteDomain: K must be >= 2");
  for (std::size_t x = 0; x < points(); ++x) check_simplex(posterior.row_span(x), "DiscreteDomain posterior");
  check_simplex(marginal, "DiscreteDomain marginal");
}

DiscreteDomain random_domain(std::size_t points, int num_classes, std::mt19937_64& rng) {
  if (points == 0 || num_classes < 2) throw ContractError("random_domain: need points >= 1 and K >= 2");
  const auto K = static_cast<std::size_t>(num_classes);
  DiscreteDomain d;
  d.posterior = Tensor(points, K, 0.0);
  for (std::size_t x = 0; x < points; ++x) {
    const auto row = dirichlet(K, rng);
    std::copy(row.begin(), row.end(), d.posterior.row_span(x).begin());
  }
  d.marginal = dirichlet(points, rng);
  return d;
}

Tensor random_predictor(std::size_t points, int num_classes, std::mt19937_64& rng) {
  const auto K = static_cast<std::size_t>(num_classes);
  Tensor t(points, K, 0.0);
  for (std::size_t x = 0; x < points; ++x) {
    const auto row = dirichlet(K, rng);
    std::copy(row.begin(), row.end(), t.row_span(x).begin());
  }
  return t;
}

UnbiasednessResult exact_unbiasedness(const DiscreteDomain& d, const Tensor& pred) {
  d.validate();
  if (pred.rows() != d.points() || pred.cols() != d.posterior.cols()) {
    throw ContractError("exact_unbiasedness: predictor is " + shape_string(pred.shape()) + ", domain is " +
                        shape_string(d.posterior.shape()));
  }
  for (std::size_t x = 0; x < pred.rows(); ++x) check_simplex(pred.row_span(x), "exact_unbiasedness predictor");

  const int K = d.num_classes();
  const auto Ks = static_cast<std::size_t>(K);
  const Tensor pbar = complementary_posterior(d);

  UnbiasednessResult r;
  r.true_risk = true_risk(d, pred);
  double all = 0.0, comp = 0.0;
  for (std::size_t x = 0; x < d.points(); ++x) {
    for (std::size_t k = 0; k < Ks; ++k) {
      all += d.marginal[x] * loss_of(pred(x, k));
      comp += d.marginal[x] * pbar(x, k) * loss_of(pred(x, k));
    }
  }
  r.rewritten_risk = all - static_cast<double>(K - 1) * comp;

  if (d.points() * Ks <= kEnumerationCap) {
    double acc = 0.0;
    for (std::size_t x = 0; x < d.points(); ++x) {
      for (int k = 0; k < K; ++k) {
        const double w = d.marginal[x] * pbar(x, static_cast<std::size_t>(k));
        if (w == 0.0) continue;
        const std::size_t xs[1] = {x};
        const int cs[1] = {k};
        acc += w * loss_route(pred, xs, cs);
      }
    }
    r.loss_route_risk = acc;
    r.gap = std::max(std::abs(r.true_risk - r.rewritten_risk), std::abs(r.true_risk - r.loss_route_risk));
  } else {
    r.enumerated = false;
    std::mt19937_64 rng(0x5eed);
    const auto s = draw(d, 100000, rng);
    r.loss_route_risk = loss_route(pred, s.xs, s.comp);
    r.gap = std::abs(r.true_risk - r.rewritten_risk);
  }
  return r;
}

MonteCarloResult monte_carlo_unbiasedness(const DiscreteDomain& d, const Tensor& pred, std::size_t n,
                                          std::uint64_t seed) {
  d.validate();
  if (n < 1000) throw ContractError("monte_carlo_unbiasedness: n must be >= 1000");
  std::seed_seq seq{seed, std::uint64_t{17}};
  std::mt19937_64 rng(seq);
  const auto s = draw(d, n, rng);

  MonteCarloResult r;
  r.true_risk = true_risk(d, pred);
  r.empirical = loss_route(pred, s.xs, s.comp);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sample_term(pred, s.xs[i], s.comp[i]);
    const double delta = t - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (t - mean);
  }
  const double sd = std::sqrt(m2 / static_cast<double>(n - 1));
  r.std_error = sd / std::sqrt(static_cast<double>(n));
  r.z = r.std_error > 0.0 ? (r.empirical - r.true_risk) / r.std_error : 0.0;
  return r;
}

bool Report::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::string Report::to_json() const {
  nlohmann::json j;
  j["suite"] = suite;
  j["passed"] = passed();
  j["seconds"] = seconds;
  j["checks"] = nlohmann::json::array();
  for (const auto& c : checks) {
    j["checks"].push_back({{"check", c.name},
                           {"metric", c.metric},
                           {"value", c.value},
                           {"threshold", c.threshold},
                           {"pass", c.passed},
                           {"detail", c.detail}});
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Finite-difference audit

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kGradTol = 1e-4;

using Builder = std::function<ad::Var(std::vector<ad::Var>&)>;

struct GradCase {
  std::vector<Tensor> inputs;
  Builder build;
};

Tensor uniform(std::size_t r, std::size_t c, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c, 0.0);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Values bounded away from zero so relu's kink stays out of the stencil.
Tensor away_from_zero(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Tensor t = uniform(r, c, 0.1, 1.5, rng);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.values()) {
    if (flip(rng)) v = -v;
  }
  return t;
}

Tensor simplex_rows(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Tensor t(r, c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    auto row = dirichlet(c, rng);
    // Keep entries well above the floor.
    for (auto& v : row) v = 0.05 + v;
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    for (std::size_t k = 0; k < c; ++k) t(i, k) = row[k] / s;
  }
  return t;
}

struct GradOutcome {
  double max_rel = 0.0;
  std::size_t entries = 0;
};

double scalarize(ad::Var out, const Tensor& coeffs) { return ad::linear_combination(out, coeffs).value().item(); }

GradOutcome run_case(const GradCase& gc, std::mt19937_64& rng) {
  Tensor coeffs;
  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& t : gc.inputs) vars.push_back(tape.input(t));
    auto out = gc.build(vars);
    coeffs = uniform(out.rows(), out.cols(), -1.0, 1.0, rng);
    auto y = ad::linear_combination(out, coeffs);
    tape.backward(y);
    for (auto& v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&](const std::vector<Tensor>& ins) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& t : ins) vars.push_back(tape.constant(t));
    return scalarize(gc.build(vars), coeffs);
  };
  GradOutcome o;
  std::vector<Tensor> ins = gc.inputs;
  for (std::size_t a = 0; a < ins.size(); ++a) {
    for (std::size_t i = 0; i < ins[a].size(); ++i) {
      const double orig = ins[a][i];
      ins[a][i] = orig + kFdStep;
      const double up = eval(ins);
      ins[a][i] = orig - kFdStep;
      const double down = eval(ins);
      ins[a][i] = orig;
      const double numeric = (up - down) / (2.0 * kFdStep);
      const double an = analytic[a][i];
      const double denom = std::max({std::abs(an), std::abs(numeric), 1e-8});
      o.max_rel = std::max(o.max_rel, std::abs(an - numeric) / denom);
      ++o.entries;
    }
  }
  return o;
}

std::map<std::string, GradCase, std::less<>> op_cases(std::mt19937_64& rng) {
  std::map<std::string, GradCase, std::less<>> m;
  const double floor = ad::log_prob_floor();
  m["matmul"] = {{uniform(3, 4, -1, 1, rng), uniform(4, 2, -1, 1, rng)},
                 [](auto& v) { return ad::matmul(v[0], v[1]); }};
  m["add_bias"] = {{uniform(3, 4, -1, 1, rng), uniform(1, 4, -1, 1, rng)},
                   [](auto& v) { return ad::add_bias(v[0], v[1]); }};
  m["add"] = {{uniform(3, 2, -1, 1, rng), uniform(3, 2, -1, 1, rng)}, [](auto& v) { return ad::add(v[0], v[1]); }};
  m["mul"] = {{uniform(3, 2, -1, 1, rng), uniform(3, 2, -1, 1, rng)}, [](auto& v) { return ad::mul(v[0], v[1]); }};
  m["scale"] = {{uniform(2, 3, -1, 1, rng)}, [](auto& v) { return ad::scale(v[0], -1.7); }};
  m["sum"] = {{uniform(3, 3, -1, 1, rng)}, [](auto& v) { return ad::sum(v[0]); }};
  m["relu"] = {{away_from_zero(3, 4, rng)}, [](auto& v) { return ad::relu(v[0]); }};
  m["sigmoid"] = {{uniform(3, 3, -3, 3, rng)}, [](auto& v) { return ad::sigmoid(v[0]); }};
  m["log_sigmoid"] = {{uniform(3, 3, -5, 5, rng)}, [floor](auto& v) { return ad::log_sigmoid(v[0], floor); }};
  m["softmax"] = {{uniform(3, 4, -2, 2, rng)}, [](auto& v) { return ad::softmax(v[0]); }};
  m["log_softmax"] = {{uniform(3, 4, -2, 2, rng)}, [floor](auto& v) { return ad::log_softmax(v[0], floor); }};
  m["log"] = {{uniform(3, 3, 0.1, 2.0, rng)}, [](auto& v) { return ad::log(v[0], ad::kProbFloor); }};
  m["scatter_map"] = {{simplex_rows(4, 4, rng)}, [](auto& v) { return ad::scatter_map(v[0], 0.5); }};
  m["outer_flatten"] = {{uniform(3, 4, -1, 1, rng), uniform(3, 3, -1, 1, rng)},
                        [](auto& v) { return ad::outer_flatten(v[0], v[1]); }};
  m["linear_combination"] = {{uniform(3, 3, -1, 1, rng)}, [c = uniform(3, 3, -2, 2, rng)](auto& v) {
                               return ad::linear_combination(v[0], c);
                             }};
  m["concat_rows"] = {{uniform(2, 3, -1, 1, rng), uniform(3, 3, -1, 1, rng)},
                      [](auto& v) { return ad::concat_rows(v[0], v[1]); }};
  m["slice_rows"] = {{uniform(5, 2, -1, 1, rng)}, [](auto& v) { return ad::slice_rows(v[0], 1, 4); }};
  return m;
}

Check grad_reverse_check(std::mt19937_64& rng) {
  // Backward is -lambda times the incoming gradient, so compare exactly.
  const double lambda = 0.7;
  ad::Tape tape;
  auto x = tape.input(uniform(3, 4, -1, 1, rng));
  const Tensor coeffs = uniform(3, 4, -1, 1, rng);
  tape.backward(ad::linear_combination(ad::grad_reverse(x, lambda), coeffs));
  const Tensor g = tape.grad(x);
  double err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(g[i] - (-lambda * coeffs[i])));
  Check c{"grad_reverse", "max_abs_error_vs_-lambda*g", err, 0.0, err == 0.0, ""};
  return c;
}

Check to_check(const std::string& name, const GradOutcome& o) {
  Check c{name, "max_relative_error", o.max_rel, kGradTol, o.max_rel < kGradTol, ""};
  c.detail = std::to_string(o.entries) + " entries";
  return c;
}

}  // namespace

Report gradcheck_suite(std::uint64_t seed) {
  const auto t0 = clock::now();
  std::seed_seq seq{seed, std::uint64_t{23}};
  std::mt19937_64 rng(seq);
  Report rep;
  rep.suite = "gradcheck";
  auto cases = op_cases(rng);
  for (auto name : ad::differentiable_ops()) {
    if (name == "grad_reverse") {
      rep.checks.push_back(grad_reverse_check(rng));
      continue;
    }
    auto it = cases.find(name);
    if (it == cases.end()) {
      rep.checks.push_back({std::string(name), "max_relative_error", 0.0, kGradTol, false, "no gradient case for op"});
      continue;
    }
    rep.checks.push_back(to_check(std::string(name), run_case(it->second, rng)));
  }

  // Composite losses, differentiated with respect to the logits.
  {
    const int K = 4;
    std::vector<int> comp = {0, 1, 1, 2, 3, 3, 0, 2};
    GradCase gc{{uniform(comp.size(), K, -2, 2, rng)}, [comp](auto& v) {
                  const auto part = complabel::partition_batch(comp, 4);
                  return losses::total_comp_loss(losses::log_probabilities(v[0]), part).total;
                }};
    rep.checks.push_back(to_check("total_comp_loss", run_case(gc, rng)));
  }
  {
    const std::vector<double> ws = {1.4, 1.1, 1.9};
    const std::vector<double> wt = {1.2, 1.6};
    GradCase gc{{uniform(3, 1, -2, 2, rng), uniform(2, 1, -2, 2, rng)},
                [ws, wt](auto& v) { return losses::adversarial_loss(v[0], ws, v[1], wt); }};
    rep.checks.push_back(to_check("adversarial_loss", run_case(gc, rng)));
  }
  {
    // Conditional feature path: softmax -> scatter map -> outer product -> linear D.
    GradCase gc{{uniform(4, 3, -1, 1, rng), uniform(4, 3, -1, 1, rng), uniform(9, 1, -1, 1, rng)}, [](auto& v) {
                  auto mapped = ad::scatter_map(ad::softmax(v[1]), 0.5);
                  auto z = ad::matmul(ad::outer_flatten(v[0], mapped), v[2]);
                  return losses::adversarial_loss(ad::slice_rows(z, 0, 2), std::vector<double>{1.0, 1.5},
                                                  ad::slice_rows(z, 2, 4), std::vector<double>{1.2, 1.0});
                }};
    rep.checks.push_back(to_check("conditional_adversarial_path", run_case(gc, rng)));
  }
  rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return rep;
}

Report unbiasedness_suite(std::uint64_t seed, int pairs_per_k) {
  const auto t0 = clock::now();
  std::seed_seq seq{seed, std::uint64_t{29}};
  std::mt19937_64 rng(seq);
  Report rep;
  rep.suite = "unbiasedness";
  std::uniform_int_distribution<std::size_t> points(1, 12);
  for (int K : {2, 3, 5, 10}) {
    double worst = 0.0;
    for (int i = 0; i < pairs_per_k; ++i) {
      const auto m = points(rng);
      const auto d = random_domain(m, K, rng);
      const auto p = random_predictor(m, K, rng);
      worst = std::max(worst, exact_unbiasedness(d, p).gap);
    }
    rep.checks.push_back({"exact_unbiasedness_K" + std::to_string(K), "max_gap", worst, 1e-10, worst < 1e-10,
                          std::to_string(pairs_per_k) + " random pairs"});
  }
  rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return rep;
}

Report monte_carlo_suite(std::uint64_t seed, std::size_t samples) {
  const auto t0 = clock::now();
  std::seed_seq seq{seed, std::uint64_t{31}};
  std::mt19937_64 rng(seq);
  const auto d = random_domain(10, 4, rng);
  const auto p = random_predictor(10, 4, rng);
  const auto r = monte_carlo_unbiasedness(d, p, samples, seed);
  Report rep;
  rep.suite = "monte_carlo";
  std::ostringstream det;
  det << "empirical " << r.empirical << ", true " << r.true_risk << ", std error " << r.std_error;
  rep.checks.push_back({"monte_carlo_unbiasedness_K4", "abs_z", std::abs(r.z), 4.0, std::abs(r.z) < 4.0, det.str()});
  rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return rep;
}

Report tmap_suite(std::uint64_t seed, std::size_t n) {
  const auto t0 = clock::now();
  std::seed_seq seq{seed, std::uint64_t{37}};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> kdist(2, 10);
  std::uniform_real_distribution<double> ldist(0.05, 3.0);

  double simplex_err = 0.0, identity_err = 0.0;
  std::size_t argmax_flips = 0, sharpen_fail = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto K = static_cast<std::size_t>(kdist(rng));
    auto row = dirichlet(K, rng);
    const Tensor f = Tensor::row(row);
    const double l = ldist(rng);
    ad::Tape tape;
    auto x = tape.constant(f);
    const Tensor t = ad::scatter_map(x, l).value();
    const Tensor id = ad::scatter_map(x, 1.0).value();
    double s = 0.0;
    for (double v : t.values()) {
      s += v;
      if (v < 0.0) simplex_err = std::max(simplex_err, -v);
    }
    simplex_err = std::max(simplex_err, std::abs(s - 1.0));
    for (std::size_t k = 0; k < K; ++k) identity_err = std::max(identity_err, std::abs(id[k] - f[k]));
    const auto am_f = std::max_element(row.begin(), row.end()) - row.begin();
    const auto tv = t.values();
    const auto am_t = std::max_element(tv.begin(), tv.end()) - tv.begin();
    if (am_f != am_t) ++argmax_flips;
    if (l < 1.0 && tv[static_cast<std::size_t>(am_t)] < row[static_cast<std::size_t>(am_f)] - 1e-12) ++sharpen_fail;
  }
  double one_hot = 0.0;
  {
    ad::Tape tape;
    const Tensor t = ad::scatter_map(tape.constant(Tensor::row({0.7, 0.3})), 0.1).value();
    one_hot = std::max(t[0], t[1]);
  }

  Report rep;
  rep.suite = "tmap";
  const std::string pts = std::to_string(n) + " random simplex points";
  rep.checks.push_back({"tmap_simplex", "max_abs_error", simplex_err, 1e-12, simplex_err <= 1e-12, pts});
  rep.checks.push_back({"tmap_argmax_invariance", "flips", static_cast<double>(argmax_flips), 0.0,
                        argmax_flips == 0, pts});
  rep.checks.push_back({"tmap_identity_l1", "max_abs_error", identity_err, 1e-12, identity_err <= 1e-12, pts});
  rep.checks.push_back({"tmap_sharpening_l_lt_1", "failures", static_cast<double>(sharpen_fail), 0.0,
                        sharpen_fail == 0, pts});
  rep.checks.push_back({"tmap_one_hot_limit", "max_entry_l0.1_[0.7,0.3]", one_hot, 0.999, one_hot > 0.999, ""});
  rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return rep;
}

Report q_algebra_suite(int max_k) {
  const auto t0 = clock::now();
  double worst_inv = 0.0, worst_rec = 0.0;
  std::mt19937_64 rng(41);
  for (int K = 2; K <= max_k; ++K) {
    const auto tm = complabel::transition_matrix(K);
    const auto Ks = static_cast<std::size_t>(K);
    for (std::size_t i = 0; i < Ks; ++i) {
      for (std::size_t j = 0; j < Ks; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < Ks; ++k) s += tm.q(i, k) * tm.q_inv(k, j);
        worst_inv = std::max(worst_inv, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
    }
    // eta_bar = Q^T eta for a random posterior; recovery must give Qinv^T eta_bar.
    const auto eta = dirichlet(Ks, rng);
    std::vector<double> eta_bar(Ks, 0.0);
    for (std::size_t k = 0; k < Ks; ++k) {
      for (std::size_t y = 0; y < Ks; ++y) eta_bar[k] += tm.q(y, k) * eta[y];
    }
    const auto rec = complabel::recover_posterior(eta_bar);
    for (std::size_t y = 0; y < Ks; ++y) {
      double via_inv = 0.0;
      for (std::size_t k = 0; k < Ks; ++k) via_inv += tm.q_inv(k, y) * eta_bar[k];
      worst_rec = std::max(worst_rec, std::abs(rec[y] - via_inv));
    }
  }
  Report rep;
  rep.suite = "q_algebra";
  const std::string ks = "K = 2.." + std::to_string(max_k);
  rep.checks.push_back({"q_times_qinv_identity", "max_abs_error", worst_inv, 1e-12, worst_inv <= 1e-12, ks});
  rep.checks.push_back({"recover_posterior_matches_qinv", "max_abs_error", worst_rec, 1e-12, worst_rec <= 1e-12, ks});
  rep.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return rep;
}

Report run_suite(std::string_view name, std::uint64_t seed) {
  auto merge = [](Report& into, const Report& r) {
    into.checks.insert(into.checks.end(), r.checks.begin(), r.checks.end());
    into.seconds += r.seconds;
  };
  Report rep;
  rep.suite = std::string(name);
  if (name == "unbiasedness" || name == "all") {
    merge(rep, unbiasedness_suite(seed));
    merge(rep, monte_carlo_suite(seed));
  }
  if (name == "gradcheck" || name == "all") merge(rep, gradcheck_suite(seed));
  if (name == "tmap" || name == "all") merge(rep, tmap_suite(seed));
  if (name == "all") merge(rep, q_algebra_suite());
  if (rep.checks.empty()) {
    throw ContractError("verify: unknown suite '" + std::string(name) + "' (expected unbiasedness, gradcheck, tmap, all)");
  }
  return rep;
}

}  // namespace clarinet::verify
