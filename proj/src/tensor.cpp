#include "clarinet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "clarinet/error.hpp"

namespace clarinet {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_.empty()) throw ContractError("Tensor: empty shape");
  for (auto d : shape_) {
    if (d == 0) throw ContractError("Tensor: zero dimension in shape " + shape_string(shape_));
  }
  const auto n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (n != values_.size()) {
    throw ContractError("Tensor: shape " + shape_string(shape_) + " holds " + std::to_string(n) +
                        " values but " + std::to_string(values_.size()) + " were given");
  }
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : Tensor({rows, cols}, std::vector<double>(rows * cols, fill)) {}

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> v;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw ContractError("Tensor::matrix: ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(v));
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("Tensor::item: expected a scalar, got shape " + shape_string(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const auto c = cols();
  std::vector<double> out;
  out.reserve(indices.size() * c);
  for (auto i : indices) {
    if (i >= rows()) throw ContractError("Tensor::gather_rows: row index out of range");
    out.insert(out.end(), values_.begin() + static_cast<std::ptrdiff_t>(i * c),
               values_.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
  }
  return Tensor({indices.size(), c}, std::move(out));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace clarinet
