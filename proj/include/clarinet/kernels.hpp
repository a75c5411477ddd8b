#pragma once

// Dense kernels behind the autodiff matrix ops. Each kernel has a serial
// reference and an OpenMP version. The OpenMP versions split work by output
// row and keep the per-element accumulation order of the serial loop, so both
// produce bit-identical results for any thread count.

#include <cstddef>

namespace clarinet::kernels {

struct Dims {
  std::size_t n, m, p;
};

namespace serial {
/// C[n,p] = A[n,m] * B[m,p]
void gemm_nn(const double* a, const double* b, double* c, Dims d);
/// C[n,m] = A[n,p] * B[m,p]^T
void gemm_nt(const double* a, const double* b, double* c, Dims d);
/// C[m,p] += A[n,m]^T * B[n,p]
void gemm_tn_acc(const double* a, const double* b, double* c, Dims d);
/// C[n, m*p] row i = flatten(outer(A row i, B row i)), A[n,m], B[n,p]
void outer_rows(const double* a, const double* b, double* c, Dims d);
}  // namespace serial

namespace omp {
void gemm_nn(const double* a, const double* b, double* c, Dims d);
void gemm_nt(const double* a, const double* b, double* c, Dims d);
void gemm_tn_acc(const double* a, const double* b, double* c, Dims d);
void outer_rows(const double* a, const double* b, double* c, Dims d);
}  // namespace omp

/// Number of threads used by the dispatching kernels below. 1 selects the
/// serial path (the default).
void set_num_threads(int n);
int num_threads();
bool openmp_available();

void gemm_nn(const double* a, const double* b, double* c, Dims d);
void gemm_nt(const double* a, const double* b, double* c, Dims d);
void gemm_tn_acc(const double* a, const double* b, double* c, Dims d);
void outer_rows(const double* a, const double* b, double* c, Dims d);

}  // namespace clarinet::kernels
