#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed.

#include <polysem/estimate.hpp>
#include <polysem/poly.hpp>
#include <polysem/tensor.hpp>
#include <polysem/wick.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace oracle {

using polysem::Polynomial;

/// Symbolic covariance c_ij = c_ji as its own parameter symbol.
inline Polynomial symbolic_cov(std::uint32_t i, std::uint32_t j) {
  if (i > j) std::swap(i, j);
  return Polynomial::variable(polysem::ParamId{i * 16 + j});
}

struct MatchingSum {
  Polynomial value;
  std::uint64_t count = 0;
};

/// Sums cov products over every perfect matching of `items`, enumerated one
/// by one with no sharing between branches.
inline void enumerate_matchings(std::vector<std::uint32_t>& items, std::vector<bool>& used, const Polynomial& partial,
                                const polysem::CovProvider& cov, MatchingSum& out) {
  std::size_t first = 0;
  while (first < items.size() && used[first]) ++first;
  if (first == items.size()) {
    out.value += partial;
    ++out.count;
    return;
  }
  used[first] = true;
  for (std::size_t j = first + 1; j < items.size(); ++j) {
    if (used[j]) continue;
    used[j] = true;
    enumerate_matchings(items, used, partial * cov(items[first], items[j]), cov, out);
    used[j] = false;
  }
  used[first] = false;
}

/// Brute-force Isserlis: expands the exponent vector into a list of items.
inline MatchingSum brute_force_expectation(const std::vector<std::uint32_t>& exponents,
                                           const polysem::CovProvider& cov) {
  std::vector<std::uint32_t> items;
  for (std::uint32_t s = 0; s < exponents.size(); ++s)
    for (std::uint32_t e = 0; e < exponents[s]; ++e) items.push_back(s);
  MatchingSum out;
  if (items.size() % 2 == 1) return out;
  std::vector<bool> used(items.size(), false);
  enumerate_matchings(items, used, Polynomial(1), cov, out);
  return out;
}

/// ULS^(k) written as the plain full index sum: every tuple in {0..m-1}^k'
/// separately, with weight 1/2^(k'-1).
inline double naive_uls_k(const polysem::CompiledMoments& moments, const polysem::EmpiricalMoments& empirical,
                          std::uint32_t k, std::span<const double> theta) {
  const std::uint32_t m = moments.dim();
  double total = 0.0;
  for (std::uint32_t order = 2; order <= k; ++order) {
    const auto& sym = moments.symbolic(order);
    const auto& emp = empirical.order(order);
    std::vector<std::uint32_t> idx(order, 0);
    double level = 0.0;
    while (true) {
      const double r = polysem::evaluate(sym.at(idx), theta) - emp.at(idx);
      level += r * r;
      std::size_t pos = 0;
      while (pos < order && ++idx[pos] == m) idx[pos++] = 0;
      if (pos == order) break;
    }
    total += level / std::pow(2.0, order - 1);
  }
  return total;
}

/// Central difference with a step scaled to |x_i|.
template <typename F>
Eigen::VectorXd finite_difference_gradient(F&& f, std::vector<double> x, double h = 1e-5) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double step = h * std::max(1.0, std::abs(xi));
    x[i] = xi + step;
    const double up = f(x);
    x[i] = xi - step;
    const double down = f(x);
    x[i] = xi;
    g(static_cast<Eigen::Index>(i)) = (up - down) / (2.0 * step);
  }
  return g;
}

/// Half-vectorized residual sum of squares, written out directly.
inline double half_vec_rss(const polysem::CompiledMoments& moments, const polysem::EmpiricalMoments& empirical,
                           std::span<const double> theta) {
  const std::uint32_t m = moments.dim();
  double total = 0.0;
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = i; j < m; ++j) {
      const std::vector<std::uint32_t> t{i, j};
      const double r = empirical.order(2).at(t) - polysem::evaluate(moments.symbolic(2).at(t), theta);
      total += r * r;
    }
  return total;
}

}  // namespace oracle
