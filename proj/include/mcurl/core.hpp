#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

namespace mcurl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic RNG. Distributions are implemented by hand so that the
// draw sequence does not depend on the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two uniforms per draw, no internal cache.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform over [0, n), rejection sampled.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return static_cast<std::size_t>(x % n);
  }

  // Independent substream identified by `stream`; unaffected by how much
  // of the parent stream has been consumed.
  Rng fork(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ (0x9E3779B97F4A7C15ull * (stream + 1))));
  }

  std::uint64_t seed() const { return seed_; }

  void save(std::ostream& os) const {
    os << seed_ << ' ' << gen_ << '\n';
  }

  void load(std::istream& is) {
    is >> seed_ >> gen_;
    if (!is) throw std::runtime_error("Rng::load: malformed stream");
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

template <typename Scalar>
Scalar clamp(Scalar v, Scalar lo, Scalar hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace mcurl
