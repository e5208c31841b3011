#pragma once

// Reproducible random streams. std::mt19937_64 has a fully specified output
// sequence; the normal transform below is ours so samples are identical
// across standard library implementations.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <stdexcept>

namespace polysem {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of an independent stream identified by (seed, keys...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() {
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    return (static_cast<double>(engine_() >> 11) + 0.5) * scale;
  }

  /// Standard normal by the Box–Muller transform (pairs cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Samples N(0, Σ) as L·u with Σ = L·L'.
class MultivariateNormal {
 public:
  explicit MultivariateNormal(const Eigen::MatrixXd& covariance) {
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance matrix is not positive definite");
    chol_ = llt.matrixL();
  }

  [[nodiscard]] Eigen::Index dim() const { return chol_.rows(); }

  void sample(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) const {
    Eigen::VectorXd u(chol_.rows());
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.normal();
    out = chol_.triangularView<Eigen::Lower>() * u;
  }

 private:
  Eigen::MatrixXd chol_;
};

}  // namespace polysem
