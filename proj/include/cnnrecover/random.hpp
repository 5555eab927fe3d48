#pragma once

// Seeded, splittable random streams.
//
// Every draw is addressed by (seed, stream label, index). A stream is a SplitMix64
// sequence whose starting state is a hash of that triple, so sample i of a data set
// can be generated without touching samples 0..i-1, and serial and parallel
// generation produce identical bits. Standard normals use the Box-Muller transform
// on two 53-bit uniforms in (0, 1).

#include <cmath>
#include <cstdint>
#include <numbers>

#include <Eigen/Dense>

namespace cnnrecover {

enum class Stream : std::uint64_t {
  ground_truth = 0x67742d7773746172ULL,
  data = 0x646174612d78790aULL,
  init = 0x696e69742d77300aULL,
  decomposition = 0x72657374617274aULL,
  partition = 0x7061727469746e0aULL,
  population = 0x706f702d68657373ULL,
  perturbation = 0x7065727475726221ULL,
};

inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit constexpr Rng(std::uint64_t state) noexcept : state_(state) {}

  /// Substream `index` of the labeled stream under `seed`.
  static Rng substream(std::uint64_t seed, Stream label, std::uint64_t index = 0) noexcept {
    const std::uint64_t key = mix64(seed ^ mix64(static_cast<std::uint64_t>(label)));
    return Rng(mix64(key + mix64(index + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Uniform integer in [0, bound), unbiased by rejection.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % bound));
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % bound;
  }

  Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cnnrecover
