#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace moe {

// xoshiro256++ with splitmix64 seeding. Hand-rolled so that streams are
// reproducible independently of the standard library in use; all randomness
// in the library flows through this generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) {
      word = splitmix64(x);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0, 1]; never returns 0 so it is safe under log().
  double next_unit() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Uniform on [0, 1).
  double next_unit_open() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
  }

  // Uniform draw from the probability simplex (Dirichlet(1,...,1)) via
  // normalized exponential spacings.
  Eigen::VectorXd next_simplex(Eigen::Index m) {
    Eigen::VectorXd v(m);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      v[i] = -std::log(next_unit());
      sum += v[i];
    }
    return v / sum;
  }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Derives an independent sub-stream seed; used to split one user seed into
  // data/restart/fold streams.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t x = seed ^ (0xD1B54A32D192ED03ull * (tag + 1));
    return splitmix64(x);
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::uint64_t state_[4] = {};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace moe
