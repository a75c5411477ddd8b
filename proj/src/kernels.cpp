#include "clarinet/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <vector>

#ifdef CLARINET_HAVE_OPENMP
#include <omp.h>
#endif

namespace clarinet::kernels {

namespace {

std::atomic<int> g_threads{1};

inline void gemm_nn_row(const double* a, const double* b, double* c, Dims d, std::size_t i) {
  double* crow = c + i * d.p;
  std::fill(crow, crow + d.p, 0.0);
  const double* arow = a + i * d.m;
  for (std::size_t k = 0; k < d.m; ++k) {
    const double av = arow[k];
    if (av == 0.0) continue;
    const double* brow = b + k * d.p;
    for (std::size_t j = 0; j < d.p; ++j) crow[j] += av * brow[j];
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, Dims d, std::size_t i) {
  double* crow = c + i * d.p;
  for (std::size_t k = 0; k < d.n; ++k) {
    const double av = a[k * d.m + i];
    if (av == 0.0) continue;
    const double* brow = b + k * d.p;
    for (std::size_t j = 0; j < d.p; ++j) crow[j] += av * brow[j];
  }
}

inline void outer_row(const double* a, const double* b, double* c, Dims d, std::size_t i) {
  const double* arow = a + i * d.m;
  const double* brow = b + i * d.p;
  double* crow = c + i * d.m * d.p;
  for (std::size_t u = 0; u < d.m; ++u) {
    for (std::size_t v = 0; v < d.p; ++v) crow[u * d.p + v] = arow[u] * brow[v];
  }
}

std::vector<double> transpose(const double* b, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
  return t;
}

}  // namespace

namespace serial {

void gemm_nn(const double* a, const double* b, double* c, Dims d) {
  for (std::size_t i = 0; i < d.n; ++i) gemm_nn_row(a, b, c, d, i);
}

void gemm_nt(const double* a, const double* b, double* c, Dims d) {
  // B[m,p] -> B^T[p,m], then a plain row-streaming product.
  const auto bt = transpose(b, d.m, d.p);
  gemm_nn(a, bt.data(), c, {d.n, d.p, d.m});
}

void gemm_tn_acc(const double* a, const double* b, double* c, Dims d) {
  for (std::size_t i = 0; i < d.m; ++i) gemm_tn_row(a, b, c, d, i);
}

void outer_rows(const double* a, const double* b, double* c, Dims d) {
  for (std::size_t i = 0; i < d.n; ++i) outer_row(a, b, c, d, i);
}

}  // namespace serial

namespace omp {

void gemm_nn(const double* a, const double* b, double* c, Dims d) {
  const auto n = static_cast<std::ptrdiff_t>(d.n);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t i = 0; i < n; ++i) gemm_nn_row(a, b, c, d, static_cast<std::size_t>(i));
}

void gemm_nt(const double* a, const double* b, double* c, Dims d) {
  const auto bt = transpose(b, d.m, d.p);
  gemm_nn(a, bt.data(), c, {d.n, d.p, d.m});
}

void gemm_tn_acc(const double* a, const double* b, double* c, Dims d) {
  const auto m = static_cast<std::ptrdiff_t>(d.m);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t i = 0; i < m; ++i) gemm_tn_row(a, b, c, d, static_cast<std::size_t>(i));
}

void outer_rows(const double* a, const double* b, double* c, Dims d) {
  const auto n = static_cast<std::ptrdiff_t>(d.n);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t i = 0; i < n; ++i) outer_row(a, b, c, d, static_cast<std::size_t>(i));
}

}  // namespace omp

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }
int num_threads() { return g_threads.load(); }

bool openmp_available() {
#ifdef CLARINET_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

namespace {
bool use_omp() { return openmp_available() && g_threads.load() > 1; }
}  // namespace

void gemm_nn(const double* a, const double* b, double* c, Dims d) {
  use_omp() ? omp::gemm_nn(a, b, c, d) : serial::gemm_nn(a, b, c, d);
}
void gemm_nt(const double* a, const double* b, double* c, Dims d) {
  use_omp() ? omp::gemm_nt(a, b, c, d) : serial::gemm_nt(a, b, c, d);
}
void gemm_tn_acc(const double* a, const double* b, double* c, Dims d) {
  use_omp() ? omp::gemm_tn_acc(a, b, c, d) : serial::gemm_tn_acc(a, b, c, d);
}
void outer_rows(const double* a, const double* b, double* c, Dims d) {
  use_omp() ? omp::outer_rows(a, b, c, d) : serial::outer_rows(a, b, c, d);
}

}  // namespace clarinet::kernels
