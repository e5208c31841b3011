#pragma once

// Observed data, sample moment tensors and WLS weight matrices.

#include "polysem/tensor.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace polysem {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Eigen::MatrixXd values;  // n × m, one row per case
  std::vector<std::string> names;
  bool centered = false;

  [[nodiscard]] std::size_t n() const { return static_cast<std::size_t>(values.rows()); }
  [[nodiscard]] std::size_t m() const { return static_cast<std::size_t>(values.cols()); }
};

enum class CsvHeader { auto_detect, present, absent };

struct CsvOptions {
  CsvHeader header = CsvHeader::auto_detect;
  /// Column order to produce (the model's manifest order). When a header is
  /// present, columns are selected by name; otherwise the file must have
  /// exactly this many columns, taken in order.
  std::vector<std::string> columns;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    rows.push_back(detail::split_csv_line(line));
  }
  if (rows.empty()) throw DataError(path + ": file contains no data");

  bool has_header = options.header == CsvHeader::present;
  if (options.header == CsvHeader::auto_detect) {
    for (const auto& cell : rows.front()) has_header |= !detail::parse_number(cell).has_value();
  }
  std::vector<std::string> file_names;
  std::size_t first_row = 0;
  if (has_header) {
    file_names = rows.front();
    first_row = 1;
  }
  const std::size_t width = rows.front().size();

  // Map output column -> file column.
  std::vector<std::size_t> source;
  std::vector<std::string> names;
  if (!options.columns.empty()) {
    names = options.columns;
    if (has_header) {
      for (const auto& want : options.columns) {
        auto it = std::find(file_names.begin(), file_names.end(), want);
        if (it == file_names.end()) throw DataError(path + ": column '" + want + "' not found in header");
        source.push_back(static_cast<std::size_t>(it - file_names.begin()));
      }
    } else {
      if (width != options.columns.size())
        throw DataError(path + ": file has " + std::to_string(width) + " columns but the model has " +
                        std::to_string(options.columns.size()) + " manifest variables");
      for (std::size_t j = 0; j < width; ++j) source.push_back(j);
    }
  } else {
    for (std::size_t j = 0; j < width; ++j) {
      source.push_back(j);
      names.push_back(has_header ? file_names[j] : "V" + std::to_string(j + 1));
    }
  }

  Dataset d;
  d.names = names;
  d.values.resize(static_cast<Eigen::Index>(rows.size() - first_row), static_cast<Eigen::Index>(source.size()));
  for (std::size_t r = first_row; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != width)
      throw DataError(path + ": row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                      " cells, expected " + std::to_string(width));
    for (std::size_t j = 0; j < source.size(); ++j) {
      const auto& cell = row[source[j]];
      auto v = detail::parse_number(cell);
      if (!v)
        throw DataError(path + ": row " + std::to_string(r + 1) + ", column " + std::to_string(source[j] + 1) +
                        (cell.empty() ? ": missing value" : ": non-numeric value '" + cell + "'"));
      d.values(static_cast<Eigen::Index>(r - first_row), static_cast<Eigen::Index>(j)) = *v;
    }
  }
  return d;
}

inline void write_csv(const Dataset& d, std::ostream& out) {
  for (std::size_t j = 0; j < d.m(); ++j) out << (j ? "," : "") << d.names[j];
  out << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < d.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.values.cols(); ++j) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, d.values(i, j));
      out << (j ? "," : "") << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << "\n";
  }
}

/// Subtracts column means. Re-centering is a no-op up to rounding.
inline Dataset center(Dataset d) {
  if (d.n() > 0) {
    const Eigen::RowVectorXd mean = d.values.colwise().mean();
    d.values.rowwise() -= mean;
  }
  d.centered = true;
  return d;
}

/// Entry (i1..ik) = (1/n) Σ_cases ∏ z_i − ∏ mean(z_i). On centered data this
/// is the k-th central sample moment.
inline MomentTensor<double> sample_cov_tensor(const Dataset& d, std::uint32_t order) {
  if (d.n() < 2) throw DataError("sample moments need at least 2 cases");
  if (order < 1) throw std::invalid_argument("tensor order must be at least 1");
  const auto m = static_cast<std::uint32_t>(d.m());
  MomentTensor<double> out(m, order);
  const auto tuples = out.tuples();
  const Eigen::RowVectorXd mean = d.values.colwise().mean();
  const double inv_n = 1.0 / static_cast<double>(d.n());
  Eigen::VectorXd prod(static_cast<Eigen::Index>(d.n()));
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    prod.setOnes();
    double mean_product = 1.0;
    for (auto i : tuples[t]) {
      prod.array() *= d.values.col(i).array();
      mean_product *= mean(i);
    }
    out.entries()[t] = prod.sum() * inv_n - mean_product;
  }
  return out;
}

/// Sample tensors for orders 2..max_order, all with divisor n.
struct EmpiricalMoments {
  std::size_t n = 0;
  std::map<std::uint32_t, MomentTensor<double>> tensors;

  [[nodiscard]] const MomentTensor<double>& order(std::uint32_t k) const {
    auto it = tensors.find(k);
    if (it == tensors.end()) throw std::invalid_argument("empirical moments of order " + std::to_string(k) + " not available");
    return it->second;
  }
  [[nodiscard]] std::uint32_t dim() const { return tensors.empty() ? 0 : tensors.begin()->second.dim(); }
};

inline EmpiricalMoments compute_moments(const Dataset& d, std::uint32_t max_order) {
  EmpiricalMoments e;
  e.n = d.n();
  for (std::uint32_t k = 2; k <= max_order; ++k) e.tensors.emplace(k, sample_cov_tensor(d, k));
  return e;
}

/// Pairs (i,j), i ≤ j, in lexicographic order: the half-vectorization layout.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> half_vec_pairs(std::uint32_t m) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  out.reserve(m * (m + 1) / 2);
  for (std::uint32_t i = 0; i < m; ++i)
    for (std::uint32_t j = i; j < m; ++j) out.emplace_back(i, j);
  return out;
}

/// Symmetric weight over half-vectorized covariances.
struct WeightMatrix {
  Eigen::MatrixXd entries;
  [[nodiscard]] std::size_t p() const { return static_cast<std::size_t>(entries.rows()); }
};

/// Entry ((i,j),(k,l)) = m4(i,j,k,l) − s(i,j)·s(k,l) with divisor n.
inline WeightMatrix browne_weight(const Dataset& d) {
  const auto m = static_cast<std::uint32_t>(d.m());
  const auto pairs = half_vec_pairs(m);
  const std::size_t p = pairs.size();
  if (d.n() <= p)
    throw DataError("the distribution-free weight matrix needs more cases than distinct covariances (n = " +
                    std::to_string(d.n()) + ", p = " + std::to_string(p) + "); use a larger sample or ULS");
  const Eigen::MatrixXd z = d.values.rowwise() - d.values.colwise().mean();
  const double inv_n = 1.0 / static_cast<double>(d.n());
  Eigen::MatrixXd products(z.rows(), static_cast<Eigen::Index>(p));
  for (std::size_t a = 0; a < p; ++a)
    products.col(static_cast<Eigen::Index>(a)) = z.col(pairs[a].first).cwiseProduct(z.col(pairs[a].second));
  const Eigen::VectorXd s = products.colwise().sum().transpose() * inv_n;
  WeightMatrix w;
  w.entries = (products.transpose() * products) * inv_n - s * s.transpose();
  w.entries = (0.5 * (w.entries + w.entries.transpose())).eval();
  return w;
}

/// Normal-theory weight: ((i,j),(k,l)) = s_ik·s_jl + s_il·s_jk.
inline WeightMatrix normal_theory_weight(const MomentTensor<double>& cov) {
  if (cov.order() != 2) throw std::invalid_argument("normal_theory_weight needs an order-2 tensor");
  const auto pairs = half_vec_pairs(cov.dim());
  const auto s = [&](std::uint32_t a, std::uint32_t b) { return cov.at(std::array{a, b}); };
  WeightMatrix w;
  w.entries.resize(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const auto [i, j] = pairs[a];
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      const auto [k, l] = pairs[b];
      w.entries(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = s(i, k) * s(j, l) + s(i, l) * s(j, k);
    }
  }
  return w;
}

/// Cholesky factor of W, or of W + λI when W itself does not factor: λ starts
/// at 1e-8·trace(W)/p and grows ×10 until the factorization succeeds.
struct FactoredWeight {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double ridge = 0.0;

  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& r) const { return llt.solve(r); }
};

inline FactoredWeight factor_weight(const WeightMatrix& w) {
  const auto p = static_cast<Eigen::Index>(w.p());
  if (p == 0) throw std::invalid_argument("empty weight matrix");
  if (!w.entries.allFinite()) throw std::invalid_argument("weight matrix has non-finite entries");
  double scale = w.entries.trace() / static_cast<double>(p);
  if (!(scale > 0.0)) scale = 1.0;
  double ridge = 0.0;
  for (int attempt = 0; attempt < 40; ++attempt, ridge = ridge == 0.0 ? 1e-8 * scale : ridge * 10.0) {
    Eigen::MatrixXd a = w.entries;
    a.diagonal().array() += ridge;
    FactoredWeight f;
    f.llt.compute(a);
    if (f.llt.info() != Eigen::Success) continue;
    // LLT succeeds on some indefinite inputs; require a positive pivot floor.
    const double min_pivot = f.llt.matrixL().toDenseMatrix().diagonal().minCoeff();
    if (!(min_pivot > 0.0)) continue;
    f.ridge = ridge;
    return f;
  }
  throw std::invalid_argument("weight matrix is not positive definite even after ridge regularization");
}

}  // namespace polysem
