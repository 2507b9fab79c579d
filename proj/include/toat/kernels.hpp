#pragma once

#include <cstddef>

// Dense kernels behind the tape ops. Every kernel exists twice: a serial
// reference under kernels::serial and an OpenMP variant under
// kernels::parallel. The parallel variants split work only across
// independent output elements and reuse the serial per-row workers, so the
// two produce bitwise-identical results; tests and the bench tool compare
// them directly. The unqualified functions dispatch by policy and work size.
namespace toat::kernels {

enum class Policy { Serial, Parallel };

void set_policy(Policy p);
Policy policy();

// minimum per-call work (output elements * inner length) before the
// parallel path is taken; below it the serial reference runs
void set_parallel_grain(std::size_t grain);
std::size_t parallel_grain();

int max_threads();
// n == 1 selects the serial policy outright
void set_max_threads(int n);

namespace serial {

// c (n x m) = a (n x k) * b (k x m)
void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
// c (n x m) = a (n x k) * b (m x k)^T
void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
// c (k x m) = a (n x k)^T * b (n x m)
void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);

void add(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* a, double s, double* y, std::size_t n);
// y += a * s
void axpy(const double* a, double s, double* y, std::size_t n);

void gelu(const double* x, double* y, std::size_t n);
void gelu_grad(const double* x, const double* gy, double* gx, std::size_t n);

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
// gx += y .* (gy - rowdot(gy, y))
void softmax_rows_grad(const double* y, const double* gy, double* gx, std::size_t rows, std::size_t cols);

// per-row normalization; caches mean and reciprocal stddev for backward
void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd, std::size_t rows, std::size_t cols);
void layer_norm_rows_grad(const double* x, const double* gain, const double* mean, const double* rstd,
                          const double* gy, double* gx, double* ggain, double* gbias,
                          std::size_t rows, std::size_t cols);

// x (len x cin) -> y (lout x cout); w (cout x cin x k); zero padding `pad`
// on both ends; lout = (len + 2*pad - k) / stride + 1
void conv1d(const double* x, const double* w, const double* b, double* y,
            std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t lout);
// gx += gather of gy * w (per input position)
void conv1d_grad_input(const double* gy, const double* w, double* gx,
                       std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t lout);
// gw += sum_t gy[t,co] * x[...]; gb += column sums of gy
void conv1d_grad_weight(const double* x, const double* gy, double* gw, double* gb,
                        std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride, std::size_t pad, std::size_t lout);

// y (cols) = column means of x (rows x cols)
void mean_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

}  // namespace serial

namespace parallel {

void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);

void add(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* a, double s, double* y, std::size_t n);
void axpy(const double* a, double s, double* y, std::size_t n);

void gelu(const double* x, double* y, std::size_t n);
void gelu_grad(const double* x, const double* gy, double* gx, std::size_t n);

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void softmax_rows_grad(const double* y, const double* gy, double* gx, std::size_t rows, std::size_t cols);

void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd, std::size_t rows, std::size_t cols);
void layer_norm_rows_grad(const double* x, const double* gain, const double* mean, const double* rstd,
                          const double* gy, double* gx, double* ggain, double* gbias,
                          std::size_t rows, std::size_t cols);

void conv1d(const double* x, const double* w, const double* b, double* y,
            std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t lout);
void conv1d_grad_input(const double* gy, const double* w, double* gx,
                       std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t lout);
void conv1d_grad_weight(const double* x, const double* gy, double* gw, double* gb,
                        std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride, std::size_t pad, std::size_t lout);

void mean_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

}  // namespace parallel

// policy- and size-dispatching entry points used by the tape
void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m);
void add(const double* a, const double* b, double* y, std::size_t n);
void mul(const double* a, const double* b, double* y, std::size_t n);
void scale(const double* a, double s, double* y, std::size_t n);
void axpy(const double* a, double s, double* y, std::size_t n);
void gelu(const double* x, double* y, std::size_t n);
void gelu_grad(const double* x, const double* gy, double* gx, std::size_t n);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void softmax_rows_grad(const double* y, const double* gy, double* gx, std::size_t rows, std::size_t cols);
void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd, std::size_t rows, std::size_t cols);
void layer_norm_rows_grad(const double* x, const double* gain, const double* mean, const double* rstd,
                          const double* gy, double* gx, double* ggain, double* gbias,
                          std::size_t rows, std::size_t cols);
void conv1d(const double* x, const double* w, const double* b, double* y,
            std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t lout);
void conv1d_grad_input(const double* gy, const double* w, double* gx,
                       std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t lout);
void conv1d_grad_weight(const double* x, const double* gy, double* gw, double* gb,
                        std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride, std::size_t pad, std::size_t lout);
void mean_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

}  // namespace toat::kernels
