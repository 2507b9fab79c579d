#include "toat/kernels.hpp"

#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace toat::kernels {

namespace {

Policy g_policy = Policy::Parallel;
std::size_t g_grain = 16384;

bool run_parallel(std::size_t work) {
#ifdef _OPENMP
  return g_policy == Policy::Parallel && work >= g_grain && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

// ---- per-row / per-element workers shared by both variants. The parallel
// functions only change which rows a thread computes, never the order of
// accumulation inside a row, so serial and parallel outputs are bitwise equal.

inline void mm_nn_row(const double* a, const double* b, double* c,
                      std::size_t k, std::size_t m, std::size_t i) {
  const double* ai = a + i * k;
  double* ci = c + i * m;
  for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = ai[p];
    const double* bp = b + p * m;
    for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
  }
}

inline void mm_nt_row(const double* a, const double* b, double* c,
                      std::size_t k, std::size_t m, std::size_t i) {
  const double* ai = a + i * k;
  double* ci = c + i * m;
  for (std::size_t j = 0; j < m; ++j) {
    const double* bj = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
    ci[j] = acc;
  }
}

inline void mm_tn_row(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m, std::size_t p) {
  double* cp = c + p * m;
  for (std::size_t j = 0; j < m; ++j) cp[j] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a[i * k + p];
    const double* bi = b + i * m;
    for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
  }
}

inline double gelu_one(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

inline double gelu_grad_one(double x) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline void softmax_row(const double* x, double* y, std::size_t cols, std::size_t i) {
  const double* xi = x + i * cols;
  double* yi = y + i * cols;
  double m = xi[0];
  for (std::size_t j = 1; j < cols; ++j) m = xi[j] > m ? xi[j] : m;
  double z = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    yi[j] = std::exp(xi[j] - m);
    z += yi[j];
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < cols; ++j) yi[j] *= inv;
}

inline void softmax_row_grad(const double* y, const double* gy, double* gx,
                             std::size_t cols, std::size_t i) {
  const double* yi = y + i * cols;
  const double* gyi = gy + i * cols;
  double* gxi = gx + i * cols;
  double dot = 0.0;
  for (std::size_t j = 0; j < cols; ++j) dot += yi[j] * gyi[j];
  for (std::size_t j = 0; j < cols; ++j) gxi[j] += yi[j] * (gyi[j] - dot);
}

inline void layer_norm_row(const double* x, const double* gain, const double* bias, double eps,
                           double* y, double* mean, double* rstd, std::size_t cols, std::size_t i) {
  const double* xi = x + i * cols;
  double* yi = y + i * cols;
  double mu = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mu += xi[j];
  mu /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = xi[j] - mu;
    var += d * d;
  }
  var /= static_cast<double>(cols);
  const double rs = 1.0 / std::sqrt(var + eps);
  mean[i] = mu;
  rstd[i] = rs;
  for (std::size_t j = 0; j < cols; ++j) yi[j] = gain[j] * ((xi[j] - mu) * rs) + bias[j];
}

inline void layer_norm_row_grad_x(const double* x, const double* gain, const double* mean,
                                  const double* rstd, const double* gy, double* gx,
                                  std::size_t cols, std::size_t i) {
  const double* xi = x + i * cols;
  const double* gyi = gy + i * cols;
  double* gxi = gx + i * cols;
  const double mu = mean[i];
  const double rs = rstd[i];
  double sum_g = 0.0, sum_gy_yhat = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double g = gyi[j] * gain[j];
    const double yhat = (xi[j] - mu) * rs;
    sum_g += g;
    sum_gy_yhat += g * yhat;
  }
  const double inv_n = 1.0 / static_cast<double>(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    const double g = gyi[j] * gain[j];
    const double yhat = (xi[j] - mu) * rs;
    gxi[j] += rs * (g - sum_g * inv_n - yhat * sum_gy_yhat * inv_n);
  }
}

inline void conv1d_frame(const double* x, const double* w, const double* b, double* y,
                         std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                         std::size_t stride, std::size_t pad, std::size_t t) {
  double* yt = y + t * cout;
  for (std::size_t co = 0; co < cout; ++co) {
    double acc = b ? b[co] : 0.0;
    const double* wco = w + co * cin * k;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* wci = wco + ci * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(pad);
        if (p < 0 || p >= static_cast<std::ptrdiff_t>(len)) continue;
        acc += x[static_cast<std::size_t>(p) * cin + ci] * wci[kk];
      }
    }
    yt[co] = acc;
  }
}

inline void conv1d_grad_input_pos(const double* gy, const double* w, double* gx,
                                  std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                                  std::size_t stride, std::size_t pad, std::size_t lout, std::size_t p) {
  (void)len;
  double* gxp = gx + p * cin;
  // output frames t with t*stride + kk - pad == p for some kk in [0,k)
  const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p) + static_cast<std::ptrdiff_t>(pad);
  std::ptrdiff_t t_lo = (q - static_cast<std::ptrdiff_t>(k) + 1 + static_cast<std::ptrdiff_t>(stride) - 1) /
                        static_cast<std::ptrdiff_t>(stride);
  if (t_lo < 0) t_lo = 0;
  std::ptrdiff_t t_hi = q / static_cast<std::ptrdiff_t>(stride);
  if (t_hi >= static_cast<std::ptrdiff_t>(lout)) t_hi = static_cast<std::ptrdiff_t>(lout) - 1;
  for (std::ptrdiff_t t = t_lo; t <= t_hi; ++t) {
    const std::ptrdiff_t kk = q - t * static_cast<std::ptrdiff_t>(stride);
    if (kk < 0 || kk >= static_cast<std::ptrdiff_t>(k)) continue;
    const double* gyt = gy + static_cast<std::size_t>(t) * cout;
    for (std::size_t co = 0; co < cout; ++co) {
      const double g = gyt[co];
      const double* wco = w + co * cin * k;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        gxp[ci] += g * wco[ci * k + static_cast<std::size_t>(kk)];
      }
    }
  }
}

inline void conv1d_grad_weight_co(const double* x, const double* gy, double* gw, double* gb,
                                  std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                                  std::size_t stride, std::size_t pad, std::size_t lout, std::size_t co) {
  double* gwco = gw + co * cin * k;
  double gbacc = 0.0;
  for (std::size_t t = 0; t < lout; ++t) {
    const double g = gy[t * cout + co];
    gbacc += g;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(t * stride + kk) - static_cast<std::ptrdiff_t>(pad);
        if (p < 0 || p >= static_cast<std::ptrdiff_t>(len)) continue;
        gwco[ci * k + kk] += g * x[static_cast<std::size_t>(p) * cin + ci];
      }
    }
  }
  if (gb) gb[co] += gbacc;
}

inline void mean_col(const double* x, double* y, std::size_t rows, std::size_t cols, std::size_t c) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rows; ++i) acc += x[i * cols + c];
  y[c] = acc / static_cast<double>(rows);
}

}  // namespace

void set_policy(Policy p) { g_policy = p; }
Policy policy() { return g_policy; }
void set_parallel_grain(std::size_t grain) { g_grain = grain; }
std::size_t parallel_grain() { return g_grain; }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_max_threads(int n) {
  if (n <= 1) {
    g_policy = Policy::Serial;
    return;
  }
  g_policy = Policy::Parallel;
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

// ---- serial reference

namespace serial {

void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) mm_nn_row(a, b, c, k, m, i);
}

void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) mm_nt_row(a, b, c, k, m, i);
}

void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) mm_tn_row(a, b, c, n, k, m, p);
}

void add(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * s;
}

void axpy(const double* a, double s, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a[i] * s;
}

void gelu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_grad(const double* x, const double* gy, double* gx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * gelu_grad_one(x[i]);
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) softmax_row(x, y, cols, i);
}

void softmax_rows_grad(const double* y, const double* gy, double* gx, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) softmax_row_grad(y, gy, gx, cols, i);
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) layer_norm_row(x, gain, bias, eps, y, mean, rstd, cols, i);
}

void layer_norm_rows_grad(const double* x, const double* gain, const double* mean, const double* rstd,
                          const double* gy, double* gx, double* ggain, double* gbias,
                          std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) layer_norm_row_grad_x(x, gain, mean, rstd, gy, gx, cols, i);
  // gain/bias grads reduce over rows; kept serial so accumulation order is fixed
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x + i * cols;
    const double* gyi = gy + i * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      ggain[j] += gyi[j] * ((xi[j] - mean[i]) * rstd[i]);
      gbias[j] += gyi[j];
    }
  }
}

void conv1d(const double* x, const double* w, const double* b, double* y,
            std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t lout) {
  for (std::size_t t = 0; t < lout; ++t) conv1d_frame(x, w, b, y, len, cin, cout, k, stride, pad, t);
}

void conv1d_grad_input(const double* gy, const double* w, double* gx,
                       std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t lout) {
  for (std::size_t p = 0; p < len; ++p)
    conv1d_grad_input_pos(gy, w, gx, len, cin, cout, k, stride, pad, lout, p);
}

void conv1d_grad_weight(const double* x, const double* gy, double* gw, double* gb,
                        std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride, std::size_t pad, std::size_t lout) {
  for (std::size_t co = 0; co < cout; ++co)
    conv1d_grad_weight_co(x, gy, gw, gb, len, cin, cout, k, stride, pad, lout, co);
}

void mean_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) mean_col(x, y, rows, cols, c);
}

}  // namespace serial

// ---- OpenMP variants

namespace parallel {

void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    mm_nn_row(a, b, c, k, m, static_cast<std::size_t>(i));
}

void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    mm_nt_row(a, b, c, k, m, static_cast<std::size_t>(i));
}

void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p)
    mm_tn_row(a, b, c, n, k, m, static_cast<std::size_t>(p));
}

void add(const double* a, const double* b, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = a[i] + b[i];
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = a[i] * b[i];
}

void scale(const double* a, double s, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = a[i] * s;
}

void axpy(const double* a, double s, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] += a[i] * s;
}

void gelu(const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) y[i] = gelu_one(x[i]);
}

void gelu_grad(const double* x, const double* gy, double* gx, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) gx[i] += gy[i] * gelu_grad_one(x[i]);
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
    softmax_row(x, y, cols, static_cast<std::size_t>(i));
}

void softmax_rows_grad(const double* y, const double* gy, double* gx, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
    softmax_row_grad(y, gy, gx, cols, static_cast<std::size_t>(i));
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
    layer_norm_row(x, gain, bias, eps, y, mean, rstd, cols, static_cast<std::size_t>(i));
}

void layer_norm_rows_grad(const double* x, const double* gain, const double* mean, const double* rstd,
                          const double* gy, double* gx, double* ggain, double* gbias,
                          std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
    layer_norm_row_grad_x(x, gain, mean, rstd, gy, gx, cols, static_cast<std::size_t>(i));
  // same fixed-order row reduction as the serial reference
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xi = x + i * cols;
    const double* gyi = gy + i * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      ggain[j] += gyi[j] * ((xi[j] - mean[i]) * rstd[i]);
      gbias[j] += gyi[j];
    }
  }
}

void conv1d(const double* x, const double* w, const double* b, double* y,
            std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t lout) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(lout); ++t)
    conv1d_frame(x, w, b, y, len, cin, cout, k, stride, pad, static_cast<std::size_t>(t));
}

void conv1d_grad_input(const double* gy, const double* w, double* gx,
                       std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t lout) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(len); ++p)
    conv1d_grad_input_pos(gy, w, gx, len, cin, cout, k, stride, pad, lout, static_cast<std::size_t>(p));
}

void conv1d_grad_weight(const double* x, const double* gy, double* gw, double* gb,
                        std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride, std::size_t pad, std::size_t lout) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t co = 0; co < static_cast<std::ptrdiff_t>(cout); ++co)
    conv1d_grad_weight_co(x, gy, gw, gb, len, cin, cout, k, stride, pad, lout, static_cast<std::size_t>(co));
}

void mean_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cols); ++c)
    mean_col(x, y, rows, cols, static_cast<std::size_t>(c));
}

}  // namespace parallel

// ---- dispatch

void mm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  if (run_parallel(n * k * m)) parallel::mm_nn(a, b, c, n, k, m);
  else serial::mm_nn(a, b, c, n, k, m);
}

void mm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  if (run_parallel(n * k * m)) parallel::mm_nt(a, b, c, n, k, m);
  else serial::mm_nt(a, b, c, n, k, m);
}

void mm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k, std::size_t m) {
  if (run_parallel(n * k * m)) parallel::mm_tn(a, b, c, n, k, m);
  else serial::mm_tn(a, b, c, n, k, m);
}

void add(const double* a, const double* b, double* y, std::size_t n) {
  if (run_parallel(n)) parallel::add(a, b, y, n);
  else serial::add(a, b, y, n);
}

void mul(const double* a, const double* b, double* y, std::size_t n) {
  if (run_parallel(n)) parallel::mul(a, b, y, n);
  else serial::mul(a, b, y, n);
}

void scale(const double* a, double s, double* y, std::size_t n) {
  if (run_parallel(n)) parallel::scale(a, s, y, n);
  else serial::scale(a, s, y, n);
}

void axpy(const double* a, double s, double* y, std::size_t n) {
  if (run_parallel(n)) parallel::axpy(a, s, y, n);
  else serial::axpy(a, s, y, n);
}

void gelu(const double* x, double* y, std::size_t n) {
  if (run_parallel(n * 8)) parallel::gelu(x, y, n);
  else serial::gelu(x, y, n);
}

void gelu_grad(const double* x, const double* gy, double* gx, std::size_t n) {
  if (run_parallel(n * 8)) parallel::gelu_grad(x, gy, gx, n);
  else serial::gelu_grad(x, gy, gx, n);
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  if (run_parallel(rows * cols * 4)) parallel::softmax_rows(x, y, rows, cols);
  else serial::softmax_rows(x, y, rows, cols);
}

void softmax_rows_grad(const double* y, const double* gy, double* gx, std::size_t rows, std::size_t cols) {
  if (run_parallel(rows * cols * 4)) parallel::softmax_rows_grad(y, gy, gx, rows, cols);
  else serial::softmax_rows_grad(y, gy, gx, rows, cols);
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd, std::size_t rows, std::size_t cols) {
  if (run_parallel(rows * cols * 4)) parallel::layer_norm_rows(x, gain, bias, eps, y, mean, rstd, rows, cols);
  else serial::layer_norm_rows(x, gain, bias, eps, y, mean, rstd, rows, cols);
}

void layer_norm_rows_grad(const double* x, const double* gain, const double* mean, const double* rstd,
                          const double* gy, double* gx, double* ggain, double* gbias,
                          std::size_t rows, std::size_t cols) {
  if (run_parallel(rows * cols * 4))
    parallel::layer_norm_rows_grad(x, gain, mean, rstd, gy, gx, ggain, gbias, rows, cols);
  else
    serial::layer_norm_rows_grad(x, gain, mean, rstd, gy, gx, ggain, gbias, rows, cols);
}

void conv1d(const double* x, const double* w, const double* b, double* y,
            std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t lout) {
  if (run_parallel(lout * cout * cin * k)) parallel::conv1d(x, w, b, y, len, cin, cout, k, stride, pad, lout);
  else serial::conv1d(x, w, b, y, len, cin, cout, k, stride, pad, lout);
}

void conv1d_grad_input(const double* gy, const double* w, double* gx,
                       std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                       std::size_t stride, std::size_t pad, std::size_t lout) {
  if (run_parallel(len * cin * cout)) parallel::conv1d_grad_input(gy, w, gx, len, cin, cout, k, stride, pad, lout);
  else serial::conv1d_grad_input(gy, w, gx, len, cin, cout, k, stride, pad, lout);
}

void conv1d_grad_weight(const double* x, const double* gy, double* gw, double* gb,
                        std::size_t len, std::size_t cin, std::size_t cout, std::size_t k,
                        std::size_t stride, std::size_t pad, std::size_t lout) {
  if (run_parallel(lout * cout * cin * k))
    parallel::conv1d_grad_weight(x, gy, gw, gb, len, cin, cout, k, stride, pad, lout);
  else
    serial::conv1d_grad_weight(x, gy, gw, gb, len, cin, cout, k, stride, pad, lout);
}

void mean_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  if (run_parallel(rows * cols)) parallel::mean_rows(x, y, rows, cols);
  else serial::mean_rows(x, y, rows, cols);
}

}  // namespace toat::kernels
