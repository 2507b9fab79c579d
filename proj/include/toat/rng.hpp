#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace toat {

// xoshiro256++ seeded through splitmix64. Self-contained so seeded runs
// reproduce bit-for-bit across platforms and standard libraries; the four
// words of state serialize directly into checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // uniform in [0,1) with 53-bit resolution
  double uniform();
  double uniform(double lo, double hi);
  // Box-Muller; draws two uniforms per call, no cached state
  double normal(double mean = 0.0, double stddev = 1.0);
  // unbiased integer in [0,n)
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace toat
