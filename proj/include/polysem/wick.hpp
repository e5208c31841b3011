#pragma once

// Gaussian expectations by Isserlis' theorem and the model-implied moment
// tensors built on them.

#include "polysem/model.hpp"
#include "polysem/tensor.hpp"

#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>

namespace polysem {

/// cov(X_i, X_j) for the symbols of one Gaussian group.
using CovProvider = std::function<Polynomial(std::uint32_t, std::uint32_t)>;

/// E(X_0^e0 · X_1^e1 · …) for centered jointly Gaussian X with covariances
/// from `cov`. Uses the pairing recursion
///   E(X_a · rest) = Σ_b cov(a,b) · E(rest without one X_b)
/// memoized on the exponent vector, so repeated factors are not re-enumerated.
class IsserlisEvaluator {
 public:
  explicit IsserlisEvaluator(CovProvider cov) : cov_(std::move(cov)) {}

  const Polynomial& expect(const std::vector<std::uint32_t>& exponents) {
    if (auto it = memo_.find(exponents); it != memo_.end()) return it->second;
    std::uint32_t total = 0;
    for (auto e : exponents) total += e;
    Polynomial result;
    if (total == 0) {
      result = Polynomial(1);
    } else if (total % 2 == 0) {
      std::size_t a = 0;
      while (exponents[a] == 0) ++a;
      std::vector<std::uint32_t> rest = exponents;
      --rest[a];
      for (std::size_t b = 0; b < rest.size(); ++b) {
        if (rest[b] == 0) continue;
        Polynomial c = cov_(static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b));
        if (c.is_zero()) continue;
        const std::uint32_t multiplicity = rest[b];
        --rest[b];
        const Polynomial sub = expect(rest);  // copy: memo_ may rehash
        ++rest[b];
        if (sub.is_zero()) continue;
        result += (c * sub) * Rational(multiplicity);
      }
    }
    return memo_.emplace(exponents, std::move(result)).first->second;
  }

  [[nodiscard]] std::size_t memo_size() const { return memo_.size(); }

 private:
  CovProvider cov_;
  std::map<std::vector<std::uint32_t>, Polynomial> memo_;
};

/// One-shot form of IsserlisEvaluator::expect. Odd total degree gives the
/// zero polynomial.
inline Polynomial gaussian_expectation(const std::vector<std::uint32_t>& exponents, const CovProvider& cov) {
  IsserlisEvaluator eval(cov);
  return eval.expect(exponents);
}

/// Gaussian expectation of a monomial whose symbols all share one group.
/// `cov` receives symbol indices within that group. Throws
/// std::invalid_argument for mixed-group monomials.
inline Polynomial gaussian_expectation(const RvMonomial& mono, const CovProvider& cov) {
  if (mono.is_constant()) return Polynomial(1);
  const RvGroup g = mono.factors().front().first.group;
  std::uint32_t dim = 0;
  for (const auto& [s, e] : mono.factors()) {
    if (s.group != g) throw std::invalid_argument("gaussian_expectation: monomial mixes independence groups");
    dim = std::max(dim, s.index + 1);
  }
  std::vector<std::uint32_t> exps(dim, 0);
  for (const auto& [s, e] : mono.factors()) exps[s.index] = e;
  return gaussian_expectation(exps, cov);
}

/// (n-1)!! for even n, the number of perfect matchings of n items.
constexpr std::uint64_t double_factorial_odd(std::uint32_t n) {
  std::uint64_t out = 1;
  for (std::uint32_t i = n; i > 1; i -= 2) out *= (i - 1);
  return out;
}

/// How implied tensors of order ≥ 3 treat first moments.
enum class MomentDefinition {
  /// E(∏(z_i − E z_i)): the moment of the mean-centered manifest vector.
  /// Matches sample moments of centered data.
  central,
  /// E(∏ z_i) − ∏ E(z_i), literally. Pair it with uncentered data: the
  /// subtracted product then carries the model's mean structure, which is
  /// informative when the manifest variables have no free intercepts.
  raw_minus_mean_product,
};

inline std::string_view to_string(MomentDefinition d) {
  return d == MomentDefinition::central ? "central" : "raw";
}

inline MomentDefinition parse_moment_definition(std::string_view s) {
  if (s == "central") return MomentDefinition::central;
  if (s == "raw") return MomentDefinition::raw_minus_mean_product;
  throw std::invalid_argument("unknown moment definition '" + std::string(s) + "' (expected central or raw)");
}

/// Symbolic moment engine for one model. Not thread-safe; copies are
/// independent (each owns its caches).
class MomentEngine {
 public:
  explicit MomentEngine(const SemModel& model)
      : model_(std::make_shared<const SemModel>(model)),
        xi_eval_(std::make_shared<IsserlisEvaluator>(phi_provider(model_))) {
    manifest_ = lower_manifest(*model_);
    means_.reserve(manifest_.size());
    for (const auto& z : manifest_) means_.push_back(expectation(z));
    centered_.reserve(manifest_.size());
    for (std::size_t i = 0; i < manifest_.size(); ++i)
      centered_.push_back(manifest_[i] - RandomPolynomial::constant(means_[i]));
  }

  MomentEngine(const MomentEngine& other)
      : model_(other.model_),
        xi_eval_(std::make_shared<IsserlisEvaluator>(phi_provider(model_))),
        manifest_(other.manifest_),
        centered_(other.centered_),
        means_(other.means_) {}
  MomentEngine& operator=(const MomentEngine&) = delete;

  [[nodiscard]] const SemModel& model() const { return *model_; }
  [[nodiscard]] std::uint32_t dim() const { return static_cast<std::uint32_t>(manifest_.size()); }
  [[nodiscard]] const std::vector<RandomPolynomial>& manifest() const { return manifest_; }

  /// E(z_i) as a parameter polynomial.
  [[nodiscard]] const Polynomial& mean(std::uint32_t i) const { return means_.at(i); }

  /// Expectation of a single random monomial: factorizes into the ξ part and
  /// one factor per independent error component.
  Polynomial mixed_expectation(const RvMonomial& mono) {
    if (auto it = mono_memo_.find(mono); it != mono_memo_.end()) return it->second;
    std::vector<std::uint32_t> xi_exps(model_->k(), 0);
    Polynomial result(1);
    for (const auto& [s, e] : mono.factors()) {
      if (s.group == RvGroup::xi) {
        xi_exps[s.index] = e;
        continue;
      }
      if (e % 2 == 1) {
        result = Polynomial();
        break;
      }
      const EntrySpec& var = error_variance(s);
      result *= var.as_polynomial().pow(e / 2) * Rational(double_factorial_odd(e));
    }
    if (!result.is_zero()) result *= xi_eval_->expect(xi_exps);
    mono_memo_.emplace(mono, result);
    return result;
  }

  Polynomial expectation(const RandomPolynomial& r) {
    Polynomial out;
    for (const auto& [mono, coeff] : r.terms()) {
      const Polynomial e = mixed_expectation(mono);
      if (!e.is_zero()) out += coeff * e;
    }
    return out;
  }

  /// E(z_{i1} · … · z_{ik}).
  Polynomial implied_raw_moment(std::span<const std::uint32_t> tuple) {
    return expectation(product(manifest_, tuple));
  }

  /// Entry of the implied order-k tensor for one index tuple.
  Polynomial implied_moment(std::span<const std::uint32_t> tuple, MomentDefinition def) {
    if (def == MomentDefinition::central || tuple.size() < 2) {
      if (tuple.size() == 1) return Polynomial();  // E(z − Ez) = 0
      return expectation(product(centered_, tuple));
    }
    Polynomial raw = implied_raw_moment(tuple);
    Polynomial mean_product(1);
    for (auto i : tuple) mean_product *= means_.at(i);
    return raw - mean_product;
  }

  /// All canonical entries of the implied tensor of the given order.
  /// `threads` > 1 splits tuples across worker engines; output is identical.
  MomentTensor<Polynomial> implied_cov_tensor(std::uint32_t order, MomentDefinition def = MomentDefinition::central,
                                              unsigned threads = 1) {
    if (order < 2) throw std::invalid_argument("implied tensor order must be at least 2");
    MomentTensor<Polynomial> out(dim(), order);
    const auto tuples = out.tuples();
    if (threads <= 1) {
      for (std::size_t t = 0; t < tuples.size(); ++t) out.entries()[t] = implied_moment(tuples[t], def);
      return out;
    }
    std::vector<std::thread> workers;
    workers.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        MomentEngine local(*this);
        for (std::size_t t = w; t < tuples.size(); t += threads) out.entries()[t] = local.implied_moment(tuples[t], def);
      });
    }
    for (auto& th : workers) th.join();
    return out;
  }

 private:
  static CovProvider phi_provider(const std::shared_ptr<const SemModel>& model) {
    return [model](std::uint32_t i, std::uint32_t j) { return model->phi(i, j).as_polynomial(); };
  }

  [[nodiscard]] const EntrySpec& error_variance(RvSymbol s) const {
    switch (s.group) {
      case RvGroup::delta: return model_->theta_delta.at(s.index);
      case RvGroup::epsilon: return model_->theta_epsilon.at(s.index);
      case RvGroup::zeta: return model_->psi.at(s.index);
      case RvGroup::xi: break;
    }
    throw std::logic_error("error_variance called for xi");
  }

  static RandomPolynomial product(const std::vector<RandomPolynomial>& z, std::span<const std::uint32_t> tuple) {
    RandomPolynomial r = RandomPolynomial::constant(Polynomial(1));
    for (auto i : tuple) r = r * z.at(i);
    return r;
  }

  std::shared_ptr<const SemModel> model_;
  std::shared_ptr<IsserlisEvaluator> xi_eval_;
  std::vector<RandomPolynomial> manifest_;
  std::vector<RandomPolynomial> centered_;
  std::vector<Polynomial> means_;
  std::map<RvMonomial, Polynomial> mono_memo_;
};

}  // namespace polysem
