#include "clarinet/autodiff.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>

#include "clarinet/error.hpp"
#include "clarinet/kernels.hpp"

namespace clarinet::ad {

namespace {

std::atomic<bool> g_corrupt_scatter{false};

constexpr std::array<std::string_view, 18> kOps = {
    "matmul",  "add_bias",    "add",         "mul",         "scale",         "sum",
    "relu",    "sigmoid",     "log_sigmoid", "softmax",     "log_softmax",   "log",
    "scatter_map", "outer_flatten", "grad_reverse", "linear_combination", "concat_rows",
    "slice_rows"};

[[noreturn]] void shape_error(std::string_view op, const Tensor& a, const Tensor& b) {
  throw ContractError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                      " and " + shape_string(b.shape()));
}

void require_same_tape(std::string_view op, Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError(std::string(op) + ": operands live on different tapes");
  }
}

Tensor like(const Tensor& t, double fill = 0.0) { return Tensor(t.shape(), std::vector<double>(t.size(), fill)); }

}  // namespace

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
  grad = like(value);
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("Var: null handle");
  return tape_->value(id_);
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value");
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  if (!value.all_finite()) throw NumericError("input: non-finite value");
  nodes_.push_back(Node{"input", std::move(value), {}, {}, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "': non-finite value");
  nodes_.push_back(Node{"parameter", p.value, {}, {}, true, &p});
  param_nodes_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (backward_done_) throw ContractError(std::string(op) + ": tape already consumed by backward; reset it");
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite output (shape " + shape_string(value.shape()) + ")");
  }
  Node node{op, std::move(value), {}, {}, false, nullptr};
  for (const auto& v : inputs) {
    if (&v.tape() != this) throw ContractError(std::string(op) + ": input from another tape");
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var output) {
  if (&output.tape() != this) throw ContractError("backward: output from another tape");
  if (backward_done_) throw ContractError("backward: tape is single-use; reset before recording again");
  const auto& out = nodes_[output.id()].value;
  if (out.size() != 1) {
    throw ContractError("backward: output must be a scalar, got shape " + shape_string(out.shape()));
  }
  backward_done_ = true;
  grads_.assign(nodes_.size(), Tensor());
  grads_[output.id()] = like(out, 1.0);

  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || grads_[i].empty() || !node.backward) continue;
    BackwardContext ctx{grads_[i], node.value, {}, {}};
    for (auto in : node.inputs) {
      ctx.in_values.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (grads_[in].empty()) grads_[in] = like(nodes_[in].value);
        ctx.in_grads.push_back(&grads_[in]);
      } else {
        ctx.in_grads.push_back(nullptr);
      }
    }
    node.backward(ctx);
  }

  for (auto& [param, id] : param_nodes_) {
    auto* p = const_cast<Parameter*>(param);
    p->grad = grads_[id].empty() ? like(p->value) : grads_[id];
  }
}

Tensor Tape::grad(Var v) const {
  if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
  return like(nodes_[v.id()].value);
}

void Tape::reset() {
  nodes_.clear();
  grads_.clear();
  param_nodes_.clear();
  backward_done_ = false;
}

std::vector<std::string_view> Tape::recorded_ops() const {
  std::vector<std::string_view> ops;
  for (const auto& n : nodes_) {
    if (!n.inputs.empty()) ops.push_back(n.op);
  }
  return ops;
}

std::vector<Tensor> gradients(Var output, std::span<Parameter* const> params) {
  auto& tape = output.tape();
  for (auto* p : params) p->grad = like(p->value);
  tape.backward(output);
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->grad);
  return out;
}

std::span<const std::string_view> differentiable_ops() { return kOps; }

double log_prob_floor() { return std::log(kProbFloor); }

namespace fault {
void corrupt_scatter_map_gradient(bool on) { g_corrupt_scatter.store(on); }
bool scatter_map_gradient_corrupted() { return g_corrupt_scatter.load(); }
}  // namespace fault

// ---------------------------------------------------------------------------
// Operations

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) shape_error("matmul", A, B);
  const kernels::Dims d{A.rows(), A.cols(), B.cols()};
  Tensor out(d.n, d.p);
  kernels::gemm_nn(A.data(), B.data(), out.data(), d);
  return a.tape().record("matmul", std::move(out), {a, b}, [d](const BackwardContext& c) {
    if (c.in_grads[0]) {
      // dA[n,m] += G[n,p] * B[m,p]^T
      Tensor tmp(d.n, d.m);
      kernels::gemm_nt(c.out_grad.data(), c.in_values[1]->data(), tmp.data(), d);
      auto& g = *c.in_grads[0];
      for (std::size_t i = 0; i < tmp.size(); ++i) g[i] += tmp[i];
    }
    if (c.in_grads[1]) {
      // dB[m,p] += A[n,m]^T * G[n,p]
      kernels::gemm_tn_acc(c.in_values[0]->data(), c.out_grad.data(), c.in_grads[1]->data(), d);
    }
  });
}

Var add_bias(Var x, Var bias) {
  require_same_tape("add_bias", x, bias);
  const Tensor& X = x.value();
  const Tensor& B = bias.value();
  if (B.rows() != 1 || B.cols() != X.cols()) shape_error("add_bias", X, B);
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) out(i, j) += B[j];
  return x.tape().record("add_bias", std::move(out), {x, bias}, [](const BackwardContext& c) {
    const auto& g = c.out_grad;
    if (c.in_grads[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*c.in_grads[0])[i] += g[i];
    }
    if (c.in_grads[1]) {
      auto& gb = *c.in_grads[1];
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

Var affine(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record("add", std::move(out), {a, b}, [](const BackwardContext& c) {
    for (auto* g : c.in_grads) {
      if (!g) continue;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += c.out_grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape("mul", a, b);
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record("mul", std::move(out), {a, b}, [](const BackwardContext& c) {
    for (int k = 0; k < 2; ++k) {
      if (!c.in_grads[k]) continue;
      const Tensor& other = *c.in_values[1 - k];
      for (std::size_t i = 0; i < other.size(); ++i) (*c.in_grads[k])[i] += c.out_grad[i] * other[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  return x.tape().record("scale", std::move(out), {x}, [factor](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.out_grad.size(); ++i) (*c.in_grads[0])[i] += factor * c.out_grad[i];
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record("sum", Tensor::scalar(s), {x}, [](const BackwardContext& c) {
    const double g = c.out_grad[0];
    for (auto& v : c.in_grads[0]->values()) v += g;
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return x.tape().record("relu", std::move(out), {x}, [](const BackwardContext& c) {
    const Tensor& in = *c.in_values[0];
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > 0.0) (*c.in_grads[0])[i] += c.out_grad[i];
    }
  });
}

namespace {
double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
}  // namespace

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = stable_sigmoid(v);
  return x.tape().record("sigmoid", std::move(out), {x}, [](const BackwardContext& c) {
    const Tensor& y = c.out_value;
    for (std::size_t i = 0; i < y.size(); ++i) (*c.in_grads[0])[i] += c.out_grad[i] * y[i] * (1.0 - y[i]);
  });
}

Var log_sigmoid(Var x, double floor) {
  Tensor out = x.value();
  for (auto& v : out.values()) {
    // ln sigmoid(z) = -softplus(-z)
    const double ls = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
    v = std::max(ls, floor);
  }
  return x.tape().record("log_sigmoid", std::move(out), {x}, [floor](const BackwardContext& c) {
    const Tensor& in = *c.in_values[0];
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (c.out_value[i] <= floor) continue;
      (*c.in_grads[0])[i] += c.out_grad[i] * (1.0 - stable_sigmoid(in[i]));
    }
  });
}

Var softmax(Var x) {
  const Tensor& in = x.value();
  Tensor out = in;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto row = out.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto& v : row) z += (v = std::exp(v - mx));
    for (auto& v : row) v /= z;
  }
  return x.tape().record("softmax", std::move(out), {x}, [](const BackwardContext& c) {
    const Tensor& y = c.out_value;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row_span(r);
      auto gr = c.out_grad.row_span(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
      auto dr = c.in_grads[0]->row_span(r);
      for (std::size_t j = 0; j < yr.size(); ++j) dr[j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var log_softmax(Var x, double floor) {
  const Tensor& in = x.value();
  Tensor out = in;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto row = out.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lz = mx + std::log(z);
    for (auto& v : row) v = std::max(v - lz, floor);
  }
  return x.tape().record("log_softmax", std::move(out), {x}, [floor](const BackwardContext& c) {
    const Tensor& in = *c.in_values[0];
    for (std::size_t r = 0; r < in.rows(); ++r) {
      auto xr = in.row_span(r);
      auto yr = c.out_value.row_span(r);
      auto gr = c.out_grad.row_span(r);
      const double mx = *std::max_element(xr.begin(), xr.end());
      double z = 0.0;
      for (double v : xr) z += std::exp(v - mx);
      double gsum = 0.0;
      for (std::size_t j = 0; j < xr.size(); ++j) {
        if (yr[j] > floor) gsum += gr[j];
      }
      auto dr = c.in_grads[0]->row_span(r);
      for (std::size_t j = 0; j < xr.size(); ++j) {
        const double p = std::exp(xr[j] - mx) / z;
        const double own = yr[j] > floor ? gr[j] : 0.0;
        dr[j] += own - p * gsum;
      }
    }
  });
}

Var log(Var x, double eps) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::log(std::max(v, eps));
  return x.tape().record("log", std::move(out), {x}, [eps](const BackwardContext& c) {
    const Tensor& in = *c.in_values[0];
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > eps) (*c.in_grads[0])[i] += c.out_grad[i] / in[i];
    }
  });
}

Var scatter_map(Var probs, double l) {
  if (!(l > 0.0)) throw ContractError("scatter_map: temperature l must be > 0, got " + std::to_string(l));
  const double a = 1.0 / l;
  const Tensor& in = probs.value();
  Tensor out = in;
  for (std::size_t r = 0; r < in.rows(); ++r) {
    auto row = out.row_span(r);
    double mx = -INFINITY;
    for (auto& v : row) {
      v = a * std::log(std::max(v, kProbFloor));
      mx = std::max(mx, v);
    }
    double z = 0.0;
    for (auto& v : row) z += (v = std::exp(v - mx));
    for (auto& v : row) v /= z;
  }
  return probs.tape().record("scatter_map", std::move(out), {probs}, [a](const BackwardContext& c) {
    const Tensor& f = *c.in_values[0];
    const Tensor& y = c.out_value;
    const bool corrupt = fault::scatter_map_gradient_corrupted();
    for (std::size_t r = 0; r < f.rows(); ++r) {
      auto fr = f.row_span(r);
      auto yr = y.row_span(r);
      auto gr = c.out_grad.row_span(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < yr.size(); ++j) dot += gr[j] * yr[j];
      auto dr = c.in_grads[0]->row_span(r);
      for (std::size_t j = 0; j < yr.size(); ++j) {
        if (fr[j] <= kProbFloor) continue;
        double d = a * yr[j] * (gr[j] - dot) / fr[j];
        if (corrupt) d *= 1.5;
        dr[j] += d;
      }
    }
  });
}

Var outer_flatten(Var u, Var v) {
  require_same_tape("outer_flatten", u, v);
  const Tensor& U = u.value();
  const Tensor& V = v.value();
  if (U.empty() || V.empty()) throw ContractError("outer_flatten: empty input");
  if (U.rows() != V.rows()) shape_error("outer_flatten", U, V);
  const kernels::Dims d{U.rows(), U.cols(), V.cols()};
  Tensor out(d.n, d.m * d.p);
  kernels::outer_rows(U.data(), V.data(), out.data(), d);
  return u.tape().record("outer_flatten", std::move(out), {u, v}, [d](const BackwardContext& c) {
    const Tensor& U = *c.in_values[0];
    const Tensor& V = *c.in_values[1];
    for (std::size_t i = 0; i < d.n; ++i) {
      const auto g = c.out_grad.row_span(i);
      if (c.in_grads[0]) {
        auto du = c.in_grads[0]->row_span(i);
        const auto vr = V.row_span(i);
        for (std::size_t a = 0; a < d.m; ++a) {
          double s = 0.0;
          for (std::size_t b = 0; b < d.p; ++b) s += g[a * d.p + b] * vr[b];
          du[a] += s;
        }
      }
      if (c.in_grads[1]) {
        auto dv = c.in_grads[1]->row_span(i);
        const auto ur = U.row_span(i);
        for (std::size_t a = 0; a < d.m; ++a) {
          for (std::size_t b = 0; b < d.p; ++b) dv[b] += g[a * d.p + b] * ur[a];
        }
      }
    }
  });
}

Var grad_reverse(Var x, double lambda) {
  if (lambda < 0.0) throw ContractError("grad_reverse: lambda must be >= 0");
  return x.tape().record("grad_reverse", x.value(), {x}, [lambda](const BackwardContext& c) {
    for (std::size_t i = 0; i < c.out_grad.size(); ++i) (*c.in_grads[0])[i] += -lambda * c.out_grad[i];
  });
}

Var linear_combination(Var x, const Tensor& coeffs) {
  if (!x.value().same_shape(coeffs)) shape_error("linear_combination", x.value(), coeffs);
  double s = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) s += coeffs[i] * x.value()[i];
  return x.tape().record("linear_combination", Tensor::scalar(s), {x},
                         [coeffs](const BackwardContext& c) {
                           const double g = c.out_grad[0];
                           auto& dx = *c.in_grads[0];
                           for (std::size_t i = 0; i < coeffs.size(); ++i) dx[i] += g * coeffs[i];
                         });
}

Var concat_rows(Var a, Var b) {
  require_same_tape("concat_rows", a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols()) shape_error("concat_rows", A, B);
  std::vector<double> v(A.values().begin(), A.values().end());
  v.insert(v.end(), B.values().begin(), B.values().end());
  const auto split = A.size();
  return a.tape().record("concat_rows", Tensor::matrix(A.rows() + B.rows(), A.cols(), std::move(v)),
                         {a, b}, [split](const BackwardContext& c) {
                           if (c.in_grads[0]) {
                             for (std::size_t i = 0; i < split; ++i) (*c.in_grads[0])[i] += c.out_grad[i];
                           }
                           if (c.in_grads[1]) {
                             auto& g = *c.in_grads[1];
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += c.out_grad[split + i];
                           }
                         });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& X = x.value();
  if (begin >= end || end > X.rows()) {
    throw ContractError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") invalid for shape " + shape_string(X.shape()));
  }
  const auto c0 = X.cols();
  std::vector<double> v(X.values().begin() + static_cast<std::ptrdiff_t>(begin * c0),
                        X.values().begin() + static_cast<std::ptrdiff_t>(end * c0));
  return x.tape().record("slice_rows", Tensor::matrix(end - begin, c0, std::move(v)), {x},
                         [offset = begin * c0](const BackwardContext& c) {
                           auto& g = *c.in_grads[0];
                           for (std::size_t i = 0; i < c.out_grad.size(); ++i) g[offset + i] += c.out_grad[i];
                         });
}

}  // namespace clarinet::ad
