#pragma once

// Exact multivariate polynomials over named parameter symbols.
//
// Coefficients are exact rationals while expressions are built; conversion to
// double happens only in evaluate() and in CompiledPolynomial.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace polysem {

using Rational = boost::multiprecision::cpp_rational;

/// Parses a decimal literal ("0.7", "-12", "1.5e-3") into an exact rational.
inline Rational parse_decimal(std::string_view text) {
  if (text.empty()) throw std::invalid_argument("empty numeric literal");
  std::size_t pos = 0;
  bool negative = false;
  if (text[pos] == '+' || text[pos] == '-') {
    negative = text[pos] == '-';
    ++pos;
  }
  boost::multiprecision::cpp_int digits = 0;
  int scale = 0;
  bool seen_digit = false;
  bool seen_point = false;
  for (; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (c >= '0' && c <= '9') {
      digits = digits * 10 + (c - '0');
      seen_digit = true;
      if (seen_point) --scale;
    } else if (c == '.' && !seen_point) {
      seen_point = true;
    } else {
      break;
    }
  }
  if (!seen_digit) throw std::invalid_argument("malformed numeric literal '" + std::string(text) + "'");
  if (pos < text.size()) {
    if (text[pos] != 'e' && text[pos] != 'E')
      throw std::invalid_argument("malformed numeric literal '" + std::string(text) + "'");
    ++pos;
    bool exp_negative = false;
    if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) {
      exp_negative = text[pos] == '-';
      ++pos;
    }
    if (pos >= text.size()) throw std::invalid_argument("malformed exponent in '" + std::string(text) + "'");
    int exponent = 0;
    for (; pos < text.size(); ++pos) {
      const char c = text[pos];
      if (c < '0' || c > '9') throw std::invalid_argument("malformed exponent in '" + std::string(text) + "'");
      exponent = exponent * 10 + (c - '0');
      if (exponent > 400) throw std::invalid_argument("exponent out of range in '" + std::string(text) + "'");
    }
    scale += exp_negative ? -exponent : exponent;
  }
  Rational value(digits);
  const boost::multiprecision::cpp_int ten_pow = boost::multiprecision::pow(
      boost::multiprecision::cpp_int(10), static_cast<unsigned>(scale < 0 ? -scale : scale));
  if (scale < 0) value /= Rational(ten_pow);
  else value *= Rational(ten_pow);
  return negative ? Rational(-value) : value;
}

/// Renders a rational as "p" or "p/q".
inline std::string to_string(const Rational& r) {
  const auto num = boost::multiprecision::numerator(r);
  const auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

/// Index of a parameter within its model's ParameterSpace.
struct ParamId {
  std::uint32_t value = 0;
  friend auto operator<=>(ParamId, ParamId) = default;
};

enum class ParamKind {
  loading_x,
  loading_y,
  structural_coef,
  xi_cov,
  error_var_delta,
  error_var_epsilon,
  error_var_zeta,
};

inline std::string_view to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::loading_x: return "loading-x";
    case ParamKind::loading_y: return "loading-y";
    case ParamKind::structural_coef: return "structural-coef";
    case ParamKind::xi_cov: return "xi-cov";
    case ParamKind::error_var_delta: return "error-var-delta";
    case ParamKind::error_var_epsilon: return "error-var-epsilon";
    case ParamKind::error_var_zeta: return "error-var-zeta";
  }
  return "unknown";
}

struct ParamSymbol {
  ParamId id;
  ParamKind kind = ParamKind::structural_coef;
  std::string name;

  friend bool operator==(const ParamSymbol& a, const ParamSymbol& b) { return a.id == b.id; }
};

/// Product of parameter powers, stored as (id, exponent) pairs sorted by id.
/// The empty monomial is the constant 1.
class Monomial {
 public:
  using Factor = std::pair<std::uint32_t, std::uint32_t>;

  Monomial() = default;

  static Monomial variable(ParamId id, std::uint32_t exponent = 1) {
    Monomial m;
    if (exponent > 0) m.factors_.emplace_back(id.value, exponent);
    return m;
  }

  [[nodiscard]] const std::vector<Factor>& factors() const { return factors_; }
  [[nodiscard]] bool is_constant() const { return factors_.empty(); }

  [[nodiscard]] std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& [id, e] : factors_) d += e;
    return d;
  }

  [[nodiscard]] std::uint32_t exponent(ParamId id) const {
    for (const auto& [v, e] : factors_)
      if (v == id.value) return e;
    return 0;
  }

  friend Monomial operator*(const Monomial& a, const Monomial& b) {
    Monomial out;
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

  /// Removes one power of `id`; precondition: exponent(id) > 0.
  [[nodiscard]] Monomial lowered(ParamId id) const {
    Monomial out = *this;
    for (auto it = out.factors_.begin(); it != out.factors_.end(); ++it) {
      if (it->first == id.value) {
        if (--it->second == 0) out.factors_.erase(it);
        break;
      }
    }
    return out;
  }

  friend bool operator==(const Monomial&, const Monomial&) = default;
  friend auto operator<=>(const Monomial& a, const Monomial& b) {
    // Lower total degree first, then lexicographic on the factors.
    if (auto c = a.degree() <=> b.degree(); c != 0) return c;
    return a.factors_ <=> b.factors_;
  }

 private:
  std::vector<Factor> factors_;
};

/// Maps a parameter id to its display name; used only for rendering.
using SymbolNamer = std::function<std::string(ParamId)>;

inline std::string default_symbol_name(ParamId id) { return "p" + std::to_string(id.value); }

class Polynomial {
 public:
  using Terms = std::map<Monomial, Rational>;

  Polynomial() = default;
  Polynomial(const Rational& c) {  // NOLINT(google-explicit-constructor)
    if (c != 0) terms_.emplace(Monomial{}, c);
  }
  Polynomial(int c) : Polynomial(Rational(c)) {}  // NOLINT(google-explicit-constructor)

  static Polynomial variable(ParamId id) {
    Polynomial p;
    p.terms_.emplace(Monomial::variable(id), Rational(1));
    return p;
  }

  static Polynomial term(const Rational& c, Monomial m) {
    Polynomial p;
    if (c != 0) p.terms_.emplace(std::move(m), c);
    return p;
  }

  [[nodiscard]] const Terms& terms() const { return terms_; }
  [[nodiscard]] bool is_zero() const { return terms_.empty(); }
  [[nodiscard]] std::size_t size() const { return terms_.size(); }

  [[nodiscard]] bool is_constant() const {
    return terms_.empty() || (terms_.size() == 1 && terms_.begin()->first.is_constant());
  }

  [[nodiscard]] Rational constant_term() const {
    auto it = terms_.find(Monomial{});
    return it == terms_.end() ? Rational(0) : it->second;
  }

  [[nodiscard]] std::uint32_t degree() const {
    std::uint32_t d = 0;
    for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
    return d;
  }

  /// Sorted ids of all symbols that occur in this polynomial.
  [[nodiscard]] std::vector<ParamId> symbols() const {
    std::vector<std::uint32_t> ids;
    for (const auto& [m, c] : terms_)
      for (const auto& [id, e] : m.factors()) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<ParamId> out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(ParamId{id});
    return out;
  }

  Polynomial& operator+=(const Polynomial& other) {
    for (const auto& [m, c] : other.terms_) accumulate(m, c);
    return *this;
  }

  Polynomial& operator-=(const Polynomial& other) {
    for (const auto& [m, c] : other.terms_) accumulate(m, -c);
    return *this;
  }

  Polynomial& operator*=(const Rational& s) {
    if (s == 0) {
      terms_.clear();
      return *this;
    }
    for (auto& [m, c] : terms_) c *= s;
    return *this;
  }

  /// Adds c·m·other to this polynomial without building the intermediate.
  void add_scaled_product(const Rational& c, const Monomial& m, const Polynomial& other) {
    if (c == 0) return;
    for (const auto& [om, oc] : other.terms_) accumulate(m * om, c * oc);
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator-(Polynomial a) { return a *= Rational(-1); }
  friend Polynomial operator*(Polynomial a, const Rational& s) { return a *= s; }
  friend Polynomial operator*(const Rational& s, Polynomial a) { return a *= s; }
  friend Polynomial operator*(Polynomial a, int s) { return a *= Rational(s); }
  friend Polynomial operator*(int s, Polynomial a) { return a *= Rational(s); }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    Polynomial out;
    for (const auto& [ma, ca] : a.terms_)
      for (const auto& [mb, cb] : b.terms_) out.accumulate(ma * mb, ca * cb);
    return out;
  }

  Polynomial& operator*=(const Polynomial& other) { return *this = *this * other; }

  [[nodiscard]] Polynomial pow(unsigned exponent) const {
    Polynomial result(1);
    for (unsigned i = 0; i < exponent; ++i) result *= *this;
    return result;
  }

  friend bool operator==(const Polynomial&, const Polynomial&) = default;

  [[nodiscard]] std::string to_string(const SymbolNamer& namer = default_symbol_name) const;

 private:
  void accumulate(const Monomial& m, const Rational& c) {
    if (c == 0) return;
    auto [it, inserted] = terms_.try_emplace(m, c);
    if (!inserted) {
      it->second += c;
      if (it->second == 0) terms_.erase(it);
    }
  }

  Terms terms_;
};

inline Polynomial differentiate(const Polynomial& p, ParamId s) {
  Polynomial out;
  for (const auto& [m, c] : p.terms()) {
    const std::uint32_t e = m.exponent(s);
    if (e == 0) continue;
    out += Polynomial::term(c * e, m.lowered(s));
  }
  return out;
}

/// Evaluates p with values indexed by ParamId::value.
inline double evaluate(const Polynomial& p, std::span<const double> values) {
  double total = 0.0;
  for (const auto& [m, c] : p.terms()) {
    double term = static_cast<double>(c);
    for (const auto& [id, e] : m.factors()) {
      if (id >= values.size())
        throw std::out_of_range("no value assigned to parameter p" + std::to_string(id));
      for (std::uint32_t k = 0; k < e; ++k) term *= values[id];
    }
    total += term;
  }
  return total;
}

using Assignment = std::map<ParamId, double>;

/// Evaluates p under a sparse assignment; every symbol in p must be assigned.
inline double evaluate(const Polynomial& p, const Assignment& assignment,
                       const SymbolNamer& namer = default_symbol_name) {
  double total = 0.0;
  for (const auto& [m, c] : p.terms()) {
    double term = static_cast<double>(c);
    for (const auto& [id, e] : m.factors()) {
      auto it = assignment.find(ParamId{id});
      if (it == assignment.end())
        throw std::out_of_range("missing value for parameter '" + namer(ParamId{id}) + "'");
      for (std::uint32_t k = 0; k < e; ++k) term *= it->second;
    }
    total += term;
  }
  return total;
}

inline std::string Polynomial::to_string(const SymbolNamer& namer) const {
  if (terms_.empty()) return "0";
  std::string out;
  bool first = true;
  for (const auto& [m, c] : terms_) {
    const bool negative = c < 0;
    const Rational magnitude = negative ? Rational(-c) : c;
    if (first) out += negative ? "-" : "";
    else out += negative ? " - " : " + ";
    first = false;
    const bool unit = magnitude == 1;
    if (!unit || m.is_constant()) out += polysem::to_string(magnitude);
    bool first_factor = true;
    for (const auto& [id, e] : m.factors()) {
      if (!unit || !first_factor) out += "*";
      first_factor = false;
      out += namer(ParamId{id});
      if (e > 1) out += "^" + std::to_string(e);
    }
  }
  return out;
}

/// Flat double-precision form of a Polynomial for repeated evaluation.
class CompiledPolynomial {
 public:
  CompiledPolynomial() = default;
  explicit CompiledPolynomial(const Polynomial& p) {
    coeffs_.reserve(p.size());
    offsets_.reserve(p.size() + 1);
    offsets_.push_back(0);
    for (const auto& [m, c] : p.terms()) {
      coeffs_.push_back(static_cast<double>(c));
      for (const auto& [id, e] : m.factors()) factors_.emplace_back(id, e);
      offsets_.push_back(static_cast<std::uint32_t>(factors_.size()));
    }
  }

  [[nodiscard]] double operator()(std::span<const double> values) const {
    double total = 0.0;
    for (std::size_t t = 0; t < coeffs_.size(); ++t) {
      double term = coeffs_[t];
      for (std::uint32_t f = offsets_[t]; f < offsets_[t + 1]; ++f) {
        const double v = values[factors_[f].first];
        for (std::uint32_t k = 0; k < factors_[f].second; ++k) term *= v;
      }
      total += term;
    }
    return total;
  }

  [[nodiscard]] std::size_t term_count() const { return coeffs_.size(); }

 private:
  std::vector<double> coeffs_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> factors_;
};

}  // namespace polysem
