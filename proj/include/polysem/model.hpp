#pragma once

// Polynomial structural equation models.
//
//   x = Λx·ξ + δ,  y = Λy·η + ε,  η = f(ξ) + ζ
//
// ξ, δ, ε and ζ are centered Gaussians; all error components are mutually
// independent and independent of ξ. f is a polynomial in ξ. An η may also
// reference other η's linearly; lowering inlines those references.

#include "polysem/poly.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace polysem {

// ---------------------------------------------------------------------------
// Random-variable side
// ---------------------------------------------------------------------------

enum class RvGroup : std::uint8_t { xi, delta, epsilon, zeta };

/// A Gaussian input of the model. `index` is 0-based within its group.
struct RvSymbol {
  RvGroup group = RvGroup::xi;
  std::uint32_t index = 0;
  friend auto operator<=>(const RvSymbol&, const RvSymbol&) = default;
};

inline std::string to_string(RvSymbol s) {
  static constexpr const char* names[] = {"xi", "delta", "epsilon", "zeta"};
  return std::string(names[static_cast<int>(s.group)]) + std::to_string(s.index + 1);
}

/// Product of random-variable powers, sorted by symbol.
class RvMonomial {
 public:
  using Factor = std::pair<RvSymbol, std::uint32_t>;

  RvMonomial() = default;
  static RvMonomial variable(RvSymbol s, std::uint32_t exponent = 1) {
    RvMonomial m;
    if (exponent > 0) m.factors_.emplace_back(s, exponent);
    return m;
  }

  [[nodiscard]] const std::vector<Factor>& factors() const { return factors_; }
  [[nodiscard]] bool is_constant() const { return factors_.empty(); }

  [[nodiscard]] std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& f : factors_) d += f.second;
    return d;
  }

  [[nodiscard]] std::uint32_t group_degree(RvGroup g) const {
    std::uint32_t d = 0;
    for (const auto& f : factors_)
      if (f.first.group == g) d += f.second;
    return d;
  }

  friend RvMonomial operator*(const RvMonomial& a, const RvMonomial& b) {
    RvMonomial out;
    out.factors_.reserve(a.factors_.size() + b.factors_.size());
    auto ia = a.factors_.begin();
    auto ib = b.factors_.begin();
    while (ia != a.factors_.end() && ib != b.factors_.end()) {
      if (ia->first < ib->first) out.factors_.push_back(*ia++);
      else if (ib->first < ia->first) out.factors_.push_back(*ib++);
      else {
        out.factors_.emplace_back(ia->first, ia->second + ib->second);
        ++ia;
        ++ib;
      }
    }
    out.factors_.insert(out.factors_.end(), ia, a.factors_.end());
    out.factors_.insert(out.factors_.end(), ib, b.factors_.end());
    return out;
  }

  friend auto operator<=>(const RvMonomial&, const RvMonomial&) = default;
  friend bool operator==(const RvMonomial&, const RvMonomial&) = default;

 private:
  std::vector<Factor> factors_;
};

/// Polynomial in random variables whose coefficients are parameter polynomials.
class RandomPolynomial {
 public:
  using Terms = std::map<RvMonomial, Polynomial>;

  RandomPolynomial() = default;
  static RandomPolynomial constant(Polynomial c) {
    RandomPolynomial r;
    if (!c.is_zero()) r.terms_.emplace(RvMonomial{}, std::move(c));
    return r;
  }
  static RandomPolynomial variable(RvSymbol s, Polynomial coeff = Polynomial(1)) {
    RandomPolynomial r;
    if (!coeff.is_zero()) r.terms_.emplace(RvMonomial::variable(s), std::move(coeff));
    return r;
  }

  [[nodiscard]] const Terms& terms() const { return terms_; }
  [[nodiscard]] bool is_zero() const { return terms_.empty(); }

  [[nodiscard]] bool contains_group(RvGroup g) const {
    for (const auto& [m, c] : terms_)
      if (m.group_degree(g) > 0) return true;
    return false;
  }

  RandomPolynomial& operator+=(const RandomPolynomial& other) {
    for (const auto& [m, c] : other.terms_) accumulate(m, c);
    return *this;
  }
  RandomPolynomial& operator-=(const RandomPolynomial& other) {
    for (const auto& [m, c] : other.terms_) accumulate(m, -c);
    return *this;
  }
  friend RandomPolynomial operator+(RandomPolynomial a, const RandomPolynomial& b) { return a += b; }
  friend RandomPolynomial operator-(RandomPolynomial a, const RandomPolynomial& b) { return a -= b; }

  friend RandomPolynomial operator*(const Polynomial& s, const RandomPolynomial& r) {
    RandomPolynomial out;
    if (s.is_zero()) return out;
    for (const auto& [m, c] : r.terms_) out.accumulate(m, s * c);
    return out;
  }

  friend RandomPolynomial operator*(const RandomPolynomial& a, const RandomPolynomial& b) {
    RandomPolynomial out;
    for (const auto& [ma, ca] : a.terms_)
      for (const auto& [mb, cb] : b.terms_) out.accumulate(ma * mb, ca * cb);
    return out;
  }

  [[nodiscard]] RandomPolynomial pow(unsigned e) const {
    RandomPolynomial result = constant(Polynomial(1));
    for (unsigned i = 0; i < e; ++i) result = result * *this;
    return result;
  }

  friend bool operator==(const RandomPolynomial&, const RandomPolynomial&) = default;

 private:
  void accumulate(const RvMonomial& m, const Polynomial& c) {
    if (c.is_zero()) return;
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (it->second.is_zero()) terms_.erase(it);
    }
  }

  Terms terms_;
};

// ---------------------------------------------------------------------------
// Model description
// ---------------------------------------------------------------------------

/// A model matrix entry: a fixed exact value or a free parameter.
struct EntrySpec {
  std::variant<Rational, ParamId> value = Rational(0);

  static EntrySpec fixed(Rational v) { return EntrySpec{std::move(v)}; }
  static EntrySpec free(ParamId id) { return EntrySpec{id}; }

  [[nodiscard]] bool is_free() const { return std::holds_alternative<ParamId>(value); }
  [[nodiscard]] ParamId param() const { return std::get<ParamId>(value); }
  [[nodiscard]] const Rational& fixed_value() const { return std::get<Rational>(value); }
  [[nodiscard]] bool is_fixed_zero() const { return !is_free() && fixed_value() == 0; }

  [[nodiscard]] Polynomial as_polynomial() const {
    return is_free() ? Polynomial::variable(param()) : Polynomial(fixed_value());
  }
};

/// One term c·ξ1^e1·…·ξk^ek of a structural equation, or c·η_j when
/// `endogenous` is set (exponents are then all zero).
struct StructuralTerm {
  std::vector<std::uint32_t> exponents;
  std::optional<std::size_t> endogenous;
  EntrySpec coefficient;
};

struct ParameterSpace {
  std::vector<ParamSymbol> symbols;
  std::vector<double> lower_bounds;

  [[nodiscard]] std::size_t size() const { return symbols.size(); }
  [[nodiscard]] std::optional<ParamId> find(std::string_view name) const {
    for (const auto& s : symbols)
      if (s.name == name) return s.id;
    return std::nullopt;
  }
};

inline constexpr double kVarianceFloor = 1e-6;

class SemModel {
 public:
  std::vector<std::string> exo_names;       // k
  std::vector<std::string> endo_names;      // l
  std::vector<std::string> x_names;         // m1
  std::vector<std::string> y_names;         // m2
  std::vector<std::vector<EntrySpec>> lambda_x;  // m1 × k
  std::vector<std::vector<EntrySpec>> lambda_y;  // m2 × l
  std::vector<std::vector<StructuralTerm>> structural;  // l equations
  std::vector<EntrySpec> theta_delta;       // m1
  std::vector<EntrySpec> theta_epsilon;     // m2
  std::vector<EntrySpec> psi;               // l
  std::vector<ParamSymbol> params;          // declaration order
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t k() const { return exo_names.size(); }
  [[nodiscard]] std::size_t l() const { return endo_names.size(); }
  [[nodiscard]] std::size_t m1() const { return x_names.size(); }
  [[nodiscard]] std::size_t m2() const { return y_names.size(); }
  [[nodiscard]] std::size_t m() const { return m1() + m2(); }

  /// Manifest names in combined order z = (x, y).
  [[nodiscard]] std::vector<std::string> manifest_names() const {
    std::vector<std::string> out = x_names;
    out.insert(out.end(), y_names.begin(), y_names.end());
    return out;
  }

  /// Symmetric access to cov(ξ); (i,j) and (j,i) share one stored entry.
  [[nodiscard]] const EntrySpec& phi(std::size_t i, std::size_t j) const { return phi_[phi_index(i, j)]; }
  EntrySpec& phi(std::size_t i, std::size_t j) { return phi_[phi_index(i, j)]; }
  void resize_phi() { phi_.assign(k() * (k() + 1) / 2, EntrySpec{}); }

  [[nodiscard]] std::string param_name(ParamId id) const {
    return id.value < params.size() ? params[id.value].name : default_symbol_name(id);
  }
  [[nodiscard]] SymbolNamer namer() const {
    return [this](ParamId id) { return param_name(id); };
  }

  /// Structural equality; free entries compare by parameter name and kind.
  friend bool operator==(const SemModel& a, const SemModel& b) {
    auto same = [&](const EntrySpec& ea, const EntrySpec& eb) {
      if (ea.is_free() != eb.is_free()) return false;
      if (!ea.is_free()) return ea.fixed_value() == eb.fixed_value();
      const auto& pa = a.params[ea.param().value];
      const auto& pb = b.params[eb.param().value];
      return pa.name == pb.name && pa.kind == pb.kind;
    };
    auto same_vec = [&](const std::vector<EntrySpec>& va, const std::vector<EntrySpec>& vb) {
      if (va.size() != vb.size()) return false;
      for (std::size_t i = 0; i < va.size(); ++i)
        if (!same(va[i], vb[i])) return false;
      return true;
    };
    if (a.exo_names != b.exo_names || a.endo_names != b.endo_names || a.x_names != b.x_names ||
        a.y_names != b.y_names || a.params.size() != b.params.size())
      return false;
    for (std::size_t i = 0; i < a.lambda_x.size(); ++i)
      if (!same_vec(a.lambda_x[i], b.lambda_x[i])) return false;
    for (std::size_t i = 0; i < a.lambda_y.size(); ++i)
      if (!same_vec(a.lambda_y[i], b.lambda_y[i])) return false;
    if (!same_vec(a.theta_delta, b.theta_delta) || !same_vec(a.theta_epsilon, b.theta_epsilon) ||
        !same_vec(a.psi, b.psi) || !same_vec(a.phi_, b.phi_))
      return false;
    for (std::size_t j = 0; j < a.structural.size(); ++j) {
      const auto& ta = a.structural[j];
      const auto& tb = b.structural[j];
      if (ta.size() != tb.size()) return false;
      for (std::size_t t = 0; t < ta.size(); ++t) {
        if (ta[t].exponents != tb[t].exponents || ta[t].endogenous != tb[t].endogenous ||
            !same(ta[t].coefficient, tb[t].coefficient))
          return false;
      }
    }
    return true;
  }

 private:
  [[nodiscard]] std::size_t phi_index(std::size_t i, std::size_t j) const {
    if (i > j) std::swap(i, j);
    // Row-major upper triangle.
    return i * k() - i * (i - 1) / 2 + (j - i);
  }

  std::vector<EntrySpec> phi_;
};

inline bool is_variance_kind(ParamKind kind) {
  return kind == ParamKind::error_var_delta || kind == ParamKind::error_var_epsilon ||
         kind == ParamKind::error_var_zeta;
}

/// Builds the ordered parameter space with bounds. Variances and diagonal
/// entries of cov(ξ) are floored at kVarianceFloor; others are unbounded.
inline ParameterSpace free_parameters(const SemModel& model) {
  ParameterSpace space;
  space.symbols = model.params;
  space.lower_bounds.assign(model.params.size(), -std::numeric_limits<double>::infinity());
  for (const auto& p : model.params)
    if (is_variance_kind(p.kind)) space.lower_bounds[p.id.value] = kVarianceFloor;
  for (std::size_t i = 0; i < model.k(); ++i) {
    const auto& e = model.phi(i, i);
    if (e.is_free()) space.lower_bounds[e.param().value] = kVarianceFloor;
  }
  return space;
}

// ---------------------------------------------------------------------------
// Lowering
// ---------------------------------------------------------------------------

namespace detail {

/// Order in which endogenous equations can be lowered (references first).
inline std::vector<std::size_t> endogenous_order(const SemModel& model) {
  const std::size_t l = model.l();
  std::vector<int> state(l, 0);  // 0 new, 1 visiting, 2 done
  std::vector<std::size_t> order;
  std::function<void(std::size_t)> visit = [&](std::size_t j) {
    if (state[j] == 2) return;
    if (state[j] == 1) throw std::invalid_argument("cyclic endogenous reference involving '" + model.endo_names[j] + "'");
    state[j] = 1;
    for (const auto& t : model.structural[j])
      if (t.endogenous) visit(*t.endogenous);
    state[j] = 2;
    order.push_back(j);
  };
  for (std::size_t j = 0; j < l; ++j) visit(j);
  return order;
}

}  // namespace detail

/// Each η_j as a random polynomial in ξ and the ζ's it depends on.
inline std::vector<RandomPolynomial> lower_endogenous(const SemModel& model) {
  std::vector<RandomPolynomial> eta(model.l());
  for (std::size_t j : detail::endogenous_order(model)) {
    RandomPolynomial f;
    for (const auto& term : model.structural[j]) {
      const Polynomial c = term.coefficient.as_polynomial();
      if (term.endogenous) {
        f += c * eta[*term.endogenous];
        continue;
      }
      RandomPolynomial piece = RandomPolynomial::constant(c);
      for (std::size_t i = 0; i < term.exponents.size(); ++i)
        if (term.exponents[i] > 0)
          piece = piece * RandomPolynomial::variable({RvGroup::xi, static_cast<std::uint32_t>(i)}).pow(term.exponents[i]);
      f += piece;
    }
    if (!model.psi[j].is_fixed_zero())
      f += RandomPolynomial::variable({RvGroup::zeta, static_cast<std::uint32_t>(j)});
    eta[j] = std::move(f);
  }
  return eta;
}

/// Manifest variables z = (x, y) as random polynomials in the Gaussian inputs.
inline std::vector<RandomPolynomial> lower_manifest(const SemModel& model) {
  std::vector<RandomPolynomial> z;
  z.reserve(model.m());
  for (std::size_t i = 0; i < model.m1(); ++i) {
    RandomPolynomial x;
    for (std::size_t j = 0; j < model.k(); ++j)
      x += RandomPolynomial::variable({RvGroup::xi, static_cast<std::uint32_t>(j)},
                                      model.lambda_x[i][j].as_polynomial());
    if (!model.theta_delta[i].is_fixed_zero())
      x += RandomPolynomial::variable({RvGroup::delta, static_cast<std::uint32_t>(i)});
    z.push_back(std::move(x));
  }
  const auto eta = lower_endogenous(model);
  for (std::size_t i = 0; i < model.m2(); ++i) {
    RandomPolynomial y;
    for (std::size_t j = 0; j < model.l(); ++j) {
      const auto& load = model.lambda_y[i][j];
      if (load.is_fixed_zero()) continue;
      y += load.as_polynomial() * eta[j];
    }
    if (!model.theta_epsilon[i].is_fixed_zero())
      y += RandomPolynomial::variable({RvGroup::epsilon, static_cast<std::uint32_t>(i)});
    z.push_back(std::move(y));
  }
  return z;
}

}  // namespace polysem
