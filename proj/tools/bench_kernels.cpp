// Times the serial reference kernels against the OpenMP variants and checks
// bitwise agreement at each size.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "toat/kernels.hpp"
#include "toat/rng.hpp"

using namespace toat;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s < best) best = s;
  }
  return best;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const char* name, double serial_s, double parallel_s, bool match) {
  std::printf("%-22s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n", name,
              serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s, match ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("threads available: %d\n", kernels::max_threads());

  {
    const std::size_t n = 384, k = 384, m = 384;
    const auto a = random_vec(n * k, rng), b = random_vec(k * m, rng);
    std::vector<double> cs(n * m), cp(n * m);
    const double ts = time_best_of(3, [&] { kernels::serial::mm_nn(a.data(), b.data(), cs.data(), n, k, m); });
    const double tp = time_best_of(3, [&] { kernels::parallel::mm_nn(a.data(), b.data(), cp.data(), n, k, m); });
    report("mm_nn 384^3", ts, tp, bitwise_equal(cs, cp));
  }
  {
    const std::size_t n = 384, k = 384, m = 384;
    const auto a = random_vec(n * k, rng), b = random_vec(m * k, rng);
    std::vector<double> cs(n * m), cp(n * m);
    const double ts = time_best_of(3, [&] { kernels::serial::mm_nt(a.data(), b.data(), cs.data(), n, k, m); });
    const double tp = time_best_of(3, [&] { kernels::parallel::mm_nt(a.data(), b.data(), cp.data(), n, k, m); });
    report("mm_nt 384^3", ts, tp, bitwise_equal(cs, cp));
  }
  {
    const std::size_t n = 384, k = 384, m = 384;
    const auto a = random_vec(n * k, rng), b = random_vec(n * m, rng);
    std::vector<double> cs(k * m), cp(k * m);
    const double ts = time_best_of(3, [&] { kernels::serial::mm_tn(a.data(), b.data(), cs.data(), n, k, m); });
    const double tp = time_best_of(3, [&] { kernels::parallel::mm_tn(a.data(), b.data(), cp.data(), n, k, m); });
    report("mm_tn 384^3", ts, tp, bitwise_equal(cs, cp));
  }
  {
    const std::size_t len = 64000, cin = 1, cout = 32, k = 10, stride = 5;
    const std::size_t lout = (len - k) / stride + 1;
    const auto x = random_vec(len * cin, rng), w = random_vec(cout * cin * k, rng), b = random_vec(cout, rng);
    std::vector<double> ys(lout * cout), yp(lout * cout);
    const double ts = time_best_of(3, [&] {
      kernels::serial::conv1d(x.data(), w.data(), b.data(), ys.data(), len, cin, cout, k, stride, 0, lout);
    });
    const double tp = time_best_of(3, [&] {
      kernels::parallel::conv1d(x.data(), w.data(), b.data(), yp.data(), len, cin, cout, k, stride, 0, lout);
    });
    report("conv1d 64000x1->32", ts, tp, bitwise_equal(ys, yp));
  }
  {
    const std::size_t rows = 1024, cols = 1024;
    const auto x = random_vec(rows * cols, rng);
    std::vector<double> ys(rows * cols), yp(rows * cols);
    const double ts = time_best_of(3, [&] { kernels::serial::softmax_rows(x.data(), ys.data(), rows, cols); });
    const double tp =
        time_best_of(3, [&] { kernels::parallel::softmax_rows(x.data(), yp.data(), rows, cols); });
    report("softmax 1024x1024", ts, tp, bitwise_equal(ys, yp));
  }
  {
    const std::size_t rows = 1024, cols = 1024;
    const auto x = random_vec(rows * cols, rng), g = random_vec(cols, rng), b = random_vec(cols, rng);
    std::vector<double> ys(rows * cols), yp(rows * cols), mean(rows), rstd(rows);
    const double ts = time_best_of(3, [&] {
      kernels::serial::layer_norm_rows(x.data(), g.data(), b.data(), 1e-5, ys.data(), mean.data(),
                                       rstd.data(), rows, cols);
    });
    const double tp = time_best_of(3, [&] {
      kernels::parallel::layer_norm_rows(x.data(), g.data(), b.data(), 1e-5, yp.data(), mean.data(),
                                         rstd.data(), rows, cols);
    });
    report("layernorm 1024x1024", ts, tp, bitwise_equal(ys, yp));
  }
  {
    const std::size_t n = 4 << 20;
    const auto x = random_vec(n, rng);
    std::vector<double> ys(n), yp(n);
    const double ts = time_best_of(3, [&] { kernels::serial::gelu(x.data(), ys.data(), n); });
    const double tp = time_best_of(3, [&] { kernels::parallel::gelu(x.data(), yp.data(), n); });
    report("gelu 4M", ts, tp, bitwise_equal(ys, yp));
  }
  return 0;
}
