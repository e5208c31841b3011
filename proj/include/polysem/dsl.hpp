#pragma once

// Line-oriented model description language.
//
//   latent exo   xi1 xi2
//   latent endo  eta1
//   manifest x   x1 x2
//   manifest y   y1 y2
//   measure x1 = 1 * xi1 + err(free)
//   measure y2 = free(mu2) * eta1 + err(free)
//   struct  eta1 = free*xi1 + free(w12)*xi1*xi2 + 0.5*xi2^2 + zeta(free)
//   cov xi1 xi2 = free
//
// Grammar (one statement per line, '#' starts a comment):
//
//   coef    := 'free' [ '(' IDENT ')' ] | NUMBER
//   factor  := IDENT [ '^' INTEGER ]
//   mterm   := [ coef '*' ] LATENT | 'err' '(' coef ')'
//   sterm   := [ coef '*' ] factor { '*' factor } | 'zeta' '(' coef ')'
//   expr    := [ '-' ] term { ('+' | '-') term }
//
// '*' and '^' bind tighter than '+'/'-'; '^' takes a literal non-negative
// integer. A leading '-' negates a numeric coefficient (or an implicit 1).
// Endogenous names may appear in a struct equation only as a linear term
// `coef * etaJ`; those references are substituted during lowering and must be
// acyclic. Off-diagonal cov(ξ) entries default to fixed 0; every diagonal
// entry must be declared. A missing zeta(...) means a fixed-zero disturbance.

#include "polysem/model.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace polysem {

class ModelError : public std::runtime_error {
 public:
  ModelError(std::size_t line, std::size_t column, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
        line_(line),
        column_(column),
        message_(message) {}

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }
  [[nodiscard]] const std::string& message() const { return message_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string message_;
};

namespace detail {

enum class Tok { ident, number, star, caret, plus, minus, lparen, rparen, equals, slash, end };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  std::size_t column = 0;
};

inline std::vector<Token> tokenize_line(const std::string& line, std::size_t line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == '#') break;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t col = i + 1;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) || line[j] == '_'))
        ++j;
      out.push_back({Tok::ident, line.substr(i, j - i), col});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t j = i;
      while (j < line.size() && (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.')) ++j;
      if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < line.size() && (line[k] == '+' || line[k] == '-')) ++k;
        if (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) {
          j = k;
          while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        }
      }
      out.push_back({Tok::number, line.substr(i, j - i), col});
      i = j;
    } else {
      Tok kind;
      switch (c) {
        case '*': kind = Tok::star; break;
        case '^': kind = Tok::caret; break;
        case '+': kind = Tok::plus; break;
        case '-': kind = Tok::minus; break;
        case '(': kind = Tok::lparen; break;
        case ')': kind = Tok::rparen; break;
        case '=': kind = Tok::equals; break;
        case '/': kind = Tok::slash; break;
        default: throw ModelError(line_no, col, std::string("unexpected character '") + c + "'");
      }
      out.push_back({kind, std::string(1, c), col});
      ++i;
    }
  }
  out.push_back({Tok::end, "", line.size() + 1});
  return out;
}

/// Coefficient as written: either fixed value or a free marker with optional name.
struct CoefText {
  bool is_free = false;
  std::optional<std::string> name;
  Rational value = 1;
  std::size_t column = 0;
};

enum class Role { exo, endo, x, y };

class Parser {
 public:
  SemModel parse(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      line_no_ = line_no;
      toks_ = tokenize_line(line, line_no);
      pos_ = 0;
      if (peek().kind == Tok::end) continue;
      statement();
    }
    finish();
    return std::move(model_);
  }

 private:
  // -- token helpers -------------------------------------------------------
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const { throw ModelError(line_no_, t.column, msg); }
  [[noreturn]] void fail_at(std::size_t column, const std::string& msg) const { throw ModelError(line_no_, column, msg); }

  const Token& expect(Tok kind, const std::string& what) {
    if (peek().kind != kind) fail(peek(), "expected " + what + (peek().text.empty() ? " at end of line" : ", found '" + peek().text + "'"));
    return next();
  }
  void expect_end() {
    if (peek().kind == Tok::slash) fail(peek(), "non-polynomial expression: division is not supported");
    if (peek().kind != Tok::end) fail(peek(), "unexpected '" + peek().text + "'");
  }

  // -- statements ----------------------------------------------------------
  void statement() {
    const Token& head = expect(Tok::ident, "statement keyword");
    if (head.text == "latent") declare_latent();
    else if (head.text == "manifest") declare_manifest();
    else if (head.text == "measure") measure();
    else if (head.text == "struct") structural();
    else if (head.text == "cov") covariance();
    else fail(head, "unknown statement '" + head.text + "'");
  }

  void declare_name(const Token& t, Role role) {
    static const std::set<std::string> reserved = {"free", "err", "zeta", "latent", "manifest",
                                                   "measure", "struct", "cov", "exo", "endo"};
    if (reserved.count(t.text)) fail(t, "'" + t.text + "' is a reserved word");
    if (roles_.count(t.text)) fail(t, "variable '" + t.text + "' declared twice");
    roles_[t.text] = role;
  }

  void declare_latent() {
    const Token& which = expect(Tok::ident, "'exo' or 'endo'");
    Role role;
    if (which.text == "exo") role = Role::exo;
    else if (which.text == "endo") role = Role::endo;
    else fail(which, "expected 'exo' or 'endo'");
    if (structure_started_) fail(which, "declarations must precede measurement, structural and cov statements");
    if (peek().kind == Tok::end) fail(peek(), "expected at least one variable name");
    while (peek().kind != Tok::end) {
      const Token& t = expect(Tok::ident, "variable name");
      declare_name(t, role);
      auto& names = role == Role::exo ? model_.exo_names : model_.endo_names;
      index_[t.text] = names.size();
      names.push_back(t.text);
    }
  }

  void declare_manifest() {
    const Token& which = expect(Tok::ident, "'x' or 'y'");
    Role role;
    if (which.text == "x") role = Role::x;
    else if (which.text == "y") role = Role::y;
    else fail(which, "expected 'x' or 'y'");
    if (structure_started_) fail(which, "declarations must precede measurement, structural and cov statements");
    if (peek().kind == Tok::end) fail(peek(), "expected at least one variable name");
    while (peek().kind != Tok::end) {
      const Token& t = expect(Tok::ident, "variable name");
      declare_name(t, role);
      auto& names = role == Role::x ? model_.x_names : model_.y_names;
      index_[t.text] = names.size();
      names.push_back(t.text);
    }
  }

  void start_structure() {
    if (structure_started_) return;
    structure_started_ = true;
    model_.lambda_x.assign(model_.m1(), std::vector<EntrySpec>(model_.k()));
    model_.lambda_y.assign(model_.m2(), std::vector<EntrySpec>(model_.l()));
    model_.structural.assign(model_.l(), {});
    model_.theta_delta.assign(model_.m1(), EntrySpec{});
    model_.theta_epsilon.assign(model_.m2(), EntrySpec{});
    model_.psi.assign(model_.l(), EntrySpec{});
    model_.resize_phi();
    measured_.assign(model_.m(), false);
    defined_.assign(model_.l(), false);
    phi_declared_.assign(model_.k() * model_.k(), false);
  }

  Role role_of(const Token& t) const {
    auto it = roles_.find(t.text);
    if (it == roles_.end()) fail(t, "unknown variable '" + t.text + "'");
    return it->second;
  }

  CoefText coef() {
    CoefText c;
    c.column = peek().column;
    if (peek().kind == Tok::number) {
      const Token& t = next();
      try {
        c.value = parse_decimal(t.text);
      } catch (const std::invalid_argument& e) {
        fail(t, e.what());
      }
      return c;
    }
    const Token& t = expect(Tok::ident, "'free' or a number");
    if (t.text != "free") fail(t, "expected 'free' or a number, found '" + t.text + "'");
    c.is_free = true;
    if (peek().kind == Tok::lparen) {
      next();
      c.name = expect(Tok::ident, "parameter name").text;
      expect(Tok::rparen, "')'");
    }
    return c;
  }

  EntrySpec make_entry(const CoefText& c, ParamKind kind, const std::string& auto_name, bool negate = false) {
    if (!c.is_free) return EntrySpec::fixed(negate ? Rational(-c.value) : c.value);
    if (negate) fail_at(c.column, "a free parameter cannot be negated");
    const std::string name = c.name.value_or(auto_name);
    for (const auto& p : model_.params)
      if (p.name == name) fail_at(c.column, "duplicate parameter name '" + name + "'");
    ParamSymbol sym{ParamId{static_cast<std::uint32_t>(model_.params.size())}, kind, name};
    model_.params.push_back(sym);
    return EntrySpec::free(sym.id);
  }

  // Parses `( coef )` after err/zeta.
  CoefText paren_coef() {
    expect(Tok::lparen, "'('");
    CoefText c = coef();
    expect(Tok::rparen, "')'");
    return c;
  }

  bool term_separator(bool& negate) {
    if (peek().kind == Tok::plus) {
      next();
      negate = false;
      return true;
    }
    if (peek().kind == Tok::minus) {
      next();
      negate = true;
      return true;
    }
    return false;
  }

  void measure() {
    start_structure();
    const Token& target = expect(Tok::ident, "manifest variable");
    const Role role = role_of(target);
    if (role != Role::x && role != Role::y) fail(target, "'" + target.text + "' is not a manifest variable");
    const bool is_x = role == Role::x;
    const std::size_t row = index_.at(target.text);
    const std::size_t flat = is_x ? row : model_.m1() + row;
    if (measured_[flat]) fail(target, "manifest '" + target.text + "' is measured twice");
    measured_[flat] = true;
    expect(Tok::equals, "'='");

    bool negate = false;
    if (peek().kind == Tok::minus) {
      next();
      negate = true;
    }
    bool have_err = false;
    std::set<std::size_t> seen;
    for (;;) {
      if (peek().kind == Tok::ident && peek().text == "err") {
        const Token& t = next();
        if (have_err) fail(t, "err(...) given twice");
        if (negate) fail(t, "err(...) cannot be negated");
        have_err = true;
        const CoefText c = paren_coef();
        auto& slot = is_x ? model_.theta_delta[row] : model_.theta_epsilon[row];
        slot = make_entry(c, is_x ? ParamKind::error_var_delta : ParamKind::error_var_epsilon, "var_" + target.text);
        if (!slot.is_free() && slot.fixed_value() < 0) fail_at(c.column, "variance must be non-negative");
      } else {
        CoefText c;
        if (peek().kind == Tok::number || (peek().kind == Tok::ident && peek().text == "free")) {
          c = coef();
          expect(Tok::star, "'*'");
        } else {
          c.column = peek().column;
        }
        const Token& lat = expect(Tok::ident, "latent variable");
        if (peek().kind == Tok::lparen) fail(lat, "non-polynomial expression: function call '" + lat.text + "(...)'");
        const Role lr = role_of(lat);
        if (is_x && lr != Role::exo) fail(lat, "x indicators load on exogenous latents only; '" + lat.text + "' is not exogenous");
        if (!is_x && lr != Role::endo) fail(lat, "y indicators load on endogenous latents only; '" + lat.text + "' is not endogenous");
        if (peek().kind == Tok::caret || peek().kind == Tok::star)
          fail(peek(), "measurement equations must be linear in the latent variables");
        const std::size_t col = index_.at(lat.text);
        if (!seen.insert(col).second) fail(lat, "latent '" + lat.text + "' appears twice");
        auto& slot = is_x ? model_.lambda_x[row][col] : model_.lambda_y[row][col];
        slot = make_entry(c, is_x ? ParamKind::loading_x : ParamKind::loading_y, "l_" + target.text + "_" + lat.text, negate);
      }
      if (!term_separator(negate)) break;
    }
    expect_end();
    if (!have_err) fail_at(target.column, "measurement of '" + target.text + "' needs an err(...) term");
  }

  void structural() {
    start_structure();
    const Token& target = expect(Tok::ident, "endogenous latent");
    if (role_of(target) != Role::endo) fail(target, "'" + target.text + "' is not an endogenous latent");
    const std::size_t j = index_.at(target.text);
    if (defined_[j]) fail(target, "structural equation for '" + target.text + "' given twice");
    defined_[j] = true;
    expect(Tok::equals, "'='");

    bool negate = false;
    if (peek().kind == Tok::minus) {
      next();
      negate = true;
    }
    bool have_zeta = false;
    std::set<std::vector<std::uint32_t>> seen_mono;
    std::set<std::size_t> seen_refs;
    auto& eq = model_.structural[j];
    for (;;) {
      if (peek().kind == Tok::ident && peek().text == "zeta") {
        const Token& t = next();
        if (have_zeta) fail(t, "zeta(...) given twice");
        if (negate) fail(t, "zeta(...) cannot be negated");
        have_zeta = true;
        const CoefText c = paren_coef();
        model_.psi[j] = make_entry(c, ParamKind::error_var_zeta, "var_" + target.text);
        if (!model_.psi[j].is_free() && model_.psi[j].fixed_value() < 0) fail_at(c.column, "variance must be non-negative");
      } else {
        const std::size_t term_col = peek().column;
        CoefText c;
        bool explicit_coef = false;
        if (peek().kind == Tok::number || (peek().kind == Tok::ident && peek().text == "free")) {
          c = coef();
          explicit_coef = true;
          if (peek().kind != Tok::star) {
            if (peek().kind == Tok::slash) fail(peek(), "non-polynomial expression: division is not supported");
            fail_at(term_col, "constant terms are not supported (latent means are fixed at zero)");
          }
          next();
        } else {
          c.column = term_col;
        }
        (void)explicit_coef;
        std::vector<std::uint32_t> exps(model_.k(), 0);
        std::optional<std::size_t> eta_ref;
        std::size_t factors = 0;
        for (;;) {
          const Token& f = expect(Tok::ident, "variable");
          if (peek().kind == Tok::lparen) fail(f, "non-polynomial expression: function call '" + f.text + "(...)'");
          const Role fr = role_of(f);
          std::uint32_t power = 1;
          if (peek().kind == Tok::caret) {
            next();
            if (peek().kind == Tok::minus) fail(peek(), "non-polynomial expression: negative exponent");
            const Token& p = expect(Tok::number, "integer exponent");
            if (p.text.find_first_not_of("0123456789") != std::string::npos)
              fail(p, "non-polynomial expression: exponent must be a non-negative integer");
            power = static_cast<std::uint32_t>(std::stoul(p.text));
          }
          if (fr == Role::endo) {
            if (index_.at(f.text) == j) fail(f, "'" + f.text + "' cannot depend on itself");
            if (factors > 0 || power != 1 || peek().kind == Tok::star)
              fail(f, "endogenous variable '" + f.text + "' on the right-hand side may only appear as a linear term");
            eta_ref = index_.at(f.text);
          } else if (fr == Role::exo) {
            if (eta_ref) fail(f, "endogenous variable on the right-hand side may only appear as a linear term");
            exps[index_.at(f.text)] += power;
          } else {
            fail(f, "manifest variable '" + f.text + "' cannot appear in a structural equation");
          }
          ++factors;
          if (peek().kind != Tok::star) break;
          next();
        }
        if (peek().kind == Tok::slash) fail(peek(), "non-polynomial expression: division is not supported");
        std::string mono_name;
        if (eta_ref) {
          if (!seen_refs.insert(*eta_ref).second) fail_at(term_col, "duplicate structural term");
          mono_name = model_.endo_names[*eta_ref];
        } else {
          bool all_zero = true;
          for (auto e : exps) all_zero &= e == 0;
          if (all_zero) fail_at(term_col, "constant terms are not supported (latent means are fixed at zero)");
          if (!seen_mono.insert(exps).second) fail_at(term_col, "duplicate structural term");
          for (std::size_t i = 0; i < exps.size(); ++i) {
            if (exps[i] == 0) continue;
            if (!mono_name.empty()) mono_name += "*";
            mono_name += model_.exo_names[i];
            if (exps[i] > 1) mono_name += "^" + std::to_string(exps[i]);
          }
        }
        StructuralTerm term;
        term.exponents = eta_ref ? std::vector<std::uint32_t>(model_.k(), 0) : exps;
        term.endogenous = eta_ref;
        term.coefficient = make_entry(c, ParamKind::structural_coef, "b_" + target.text + "_" + mono_name, negate);
        eq.push_back(std::move(term));
      }
      if (!term_separator(negate)) break;
    }
    expect_end();
  }

  void covariance() {
    start_structure();
    const Token& a = expect(Tok::ident, "exogenous latent");
    const Token& b = expect(Tok::ident, "exogenous latent");
    if (role_of(a) != Role::exo) fail(a, "cov(...) is declared only between exogenous latents; '" + a.text + "' is not exogenous");
    if (role_of(b) != Role::exo) fail(b, "cov(...) is declared only between exogenous latents; '" + b.text + "' is not exogenous");
    std::size_t i = index_.at(a.text);
    std::size_t j = index_.at(b.text);
    if (i > j) std::swap(i, j);
    if (phi_declared_[i * model_.k() + j]) fail(a, "cov " + a.text + " " + b.text + " declared twice");
    phi_declared_[i * model_.k() + j] = true;
    expect(Tok::equals, "'='");
    bool negate = false;
    if (peek().kind == Tok::minus) {
      next();
      negate = true;
    }
    const CoefText c = coef();
    expect_end();
    const std::string auto_name = i == j ? "var_" + model_.exo_names[i] : "cov_" + model_.exo_names[i] + "_" + model_.exo_names[j];
    model_.phi(i, j) = make_entry(c, ParamKind::xi_cov, auto_name, negate);
    if (i == j && !model_.phi(i, i).is_free() && model_.phi(i, i).fixed_value() <= 0)
      fail_at(c.column, "variance of '" + model_.exo_names[i] + "' must be positive");
  }

  void finish() {
    line_no_ += 1;
    if (model_.k() == 0 && model_.l() == 0) throw ModelError(line_no_, 1, "model declares no latent variables");
    start_structure();
    for (std::size_t i = 0; i < model_.m(); ++i) {
      if (!measured_[i]) {
        const auto names = model_.manifest_names();
        throw ModelError(line_no_, 1, "manifest '" + names[i] + "' has no measure statement");
      }
    }
    for (std::size_t j = 0; j < model_.l(); ++j)
      if (!defined_[j]) throw ModelError(line_no_, 1, "endogenous '" + model_.endo_names[j] + "' has no struct statement");
    for (std::size_t i = 0; i < model_.k(); ++i)
      if (!phi_declared_[i * model_.k() + i])
        throw ModelError(line_no_, 1, "variance of exogenous '" + model_.exo_names[i] + "' is not declared (cov " +
                                          model_.exo_names[i] + " " + model_.exo_names[i] + " = ...)");
    try {
      (void)endogenous_order(model_);
    } catch (const std::invalid_argument& e) {
      throw ModelError(line_no_, 1, e.what());
    }
    auto scale_warning = [&](const std::string& latent, auto fixed_nonzero) {
      if (!fixed_nonzero)
        model_.warnings.push_back("latent '" + latent + "' has no fixed non-zero loading; its scale is not set");
    };
    for (std::size_t j = 0; j < model_.k(); ++j) {
      bool ok = false;
      for (std::size_t i = 0; i < model_.m1(); ++i) {
        const auto& e = model_.lambda_x[i][j];
        ok |= !e.is_free() && e.fixed_value() != 0;
      }
      scale_warning(model_.exo_names[j], ok);
    }
    for (std::size_t j = 0; j < model_.l(); ++j) {
      bool ok = false;
      for (std::size_t i = 0; i < model_.m2(); ++i) {
        const auto& e = model_.lambda_y[i][j];
        ok |= !e.is_free() && e.fixed_value() != 0;
      }
      scale_warning(model_.endo_names[j], ok);
    }
  }

  SemModel model_;
  std::map<std::string, Role> roles_;
  std::map<std::string, std::size_t> index_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
  bool structure_started_ = false;
  std::vector<bool> measured_;
  std::vector<bool> defined_;
  std::vector<bool> phi_declared_;
};

/// Exact decimal expansion of a rational with a terminating expansion.
inline std::string decimal_string(const Rational& r) {
  using boost::multiprecision::cpp_int;
  cpp_int num = boost::multiprecision::numerator(r);
  cpp_int den = boost::multiprecision::denominator(r);
  const bool negative = num < 0;
  if (negative) num = -num;
  unsigned twos = 0;
  unsigned fives = 0;
  cpp_int d = den;
  while (d != 1) {
    if (d % 2 == 0) {
      d /= 2;
      ++twos;
    } else if (d % 5 == 0) {
      d /= 5;
      ++fives;
    } else {
      throw std::invalid_argument("value " + to_string(r) + " has no finite decimal form");
    }
  }
  const unsigned scale = std::max(twos, fives);
  cpp_int scaled = num * boost::multiprecision::pow(cpp_int(10), scale) / den;
  std::string digits = scaled.str();
  if (scale > 0) {
    if (digits.size() <= scale) digits.insert(0, scale - digits.size() + 1, '0');
    digits.insert(digits.size() - scale, ".");
    while (digits.back() == '0') digits.pop_back();
    if (digits.back() == '.') digits.pop_back();
  }
  return (negative ? "-" : "") + digits;
}

}  // namespace detail

inline SemModel parse_model(std::istream& in) { return detail::Parser{}.parse(in); }

inline SemModel parse_model(const std::string& text) {
  std::istringstream in(text);
  return parse_model(in);
}

inline SemModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  try {
    return parse_model(in);
  } catch (const ModelError& e) {
    throw ModelError(e.line(), e.column(), path + ": " + e.message());
  }
}

/// Renders a model back into the DSL. parse_model(render_model(m)) == m.
inline std::string render_model(const SemModel& model) {
  auto coef_text = [&](const EntrySpec& e) -> std::string {
    if (e.is_free()) return "free(" + model.param_name(e.param()) + ")";
    return detail::decimal_string(e.fixed_value());
  };
  auto join = [](const std::vector<std::string>& names) {
    std::string s;
    for (const auto& n : names) s += " " + n;
    return s;
  };
  // Appends "<sign> <coef> * <what>" handling negative fixed values.
  auto append_term = [&](std::string& line, bool& first, const EntrySpec& e, const std::string& what) {
    std::string c = coef_text(e);
    bool negative = !c.empty() && c[0] == '-';
    if (negative) c.erase(0, 1);
    if (first) line += negative ? " -" : "";
    else line += negative ? " -" : " +";
    line += " " + c + " * " + what;
    first = false;
  };

  std::ostringstream out;
  if (model.k() > 0) out << "latent exo  " << join(model.exo_names) << "\n";
  if (model.l() > 0) out << "latent endo " << join(model.endo_names) << "\n";
  if (model.m1() > 0) out << "manifest x  " << join(model.x_names) << "\n";
  if (model.m2() > 0) out << "manifest y  " << join(model.y_names) << "\n";
  for (std::size_t i = 0; i < model.m1(); ++i) {
    std::string line = "measure " + model.x_names[i] + " =";
    bool first = true;
    for (std::size_t j = 0; j < model.k(); ++j)
      if (!model.lambda_x[i][j].is_fixed_zero()) append_term(line, first, model.lambda_x[i][j], model.exo_names[j]);
    line += std::string(first ? " " : " + ") + "err(" + coef_text(model.theta_delta[i]) + ")";
    out << line << "\n";
  }
  for (std::size_t i = 0; i < model.m2(); ++i) {
    std::string line = "measure " + model.y_names[i] + " =";
    bool first = true;
    for (std::size_t j = 0; j < model.l(); ++j)
      if (!model.lambda_y[i][j].is_fixed_zero()) append_term(line, first, model.lambda_y[i][j], model.endo_names[j]);
    line += std::string(first ? " " : " + ") + "err(" + coef_text(model.theta_epsilon[i]) + ")";
    out << line << "\n";
  }
  for (std::size_t j = 0; j < model.l(); ++j) {
    std::string line = "struct " + model.endo_names[j] + " =";
    bool first = true;
    for (const auto& t : model.structural[j]) {
      std::string mono;
      if (t.endogenous) mono = model.endo_names[*t.endogenous];
      else {
        for (std::size_t i = 0; i < t.exponents.size(); ++i) {
          if (t.exponents[i] == 0) continue;
          if (!mono.empty()) mono += " * ";
          mono += model.exo_names[i];
          if (t.exponents[i] > 1) mono += "^" + std::to_string(t.exponents[i]);
        }
      }
      append_term(line, first, t.coefficient, mono);
    }
    line += std::string(first ? " " : " + ") + "zeta(" + coef_text(model.psi[j]) + ")";
    out << line << "\n";
  }
  for (std::size_t i = 0; i < model.k(); ++i) {
    for (std::size_t j = i; j < model.k(); ++j) {
      const auto& e = model.phi(i, j);
      if (i != j && e.is_fixed_zero()) continue;
      out << "cov " << model.exo_names[i] << " " << model.exo_names[j] << " = " << coef_text(e) << "\n";
    }
  }
  return out.str();
}

}  // namespace polysem
