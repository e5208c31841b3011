#pragma once

// Synthetic data for the two bias studies and the replication harness.
//
// Noise terms N(0, s) use s as the standard deviation.

#include "polysem/dsl.hpp"
#include "polysem/empirical.hpp"
#include "polysem/estimate.hpp"
#include "polysem/rng.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cstdio>
#include <limits>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace polysem {

// Embedded copies of models/ganzach.sem and models/interaction.sem.
inline constexpr const char* kGanzachModel = R"(# Quadratic model with two exogenous latents (interaction and squared effects).
latent exo   xi1 xi2
latent endo  eta
manifest x   x1 x2 x3 x4 x5 x6
manifest y   y1 y2 y3

measure x1 = 1             * xi1 + err(free(theta_x1))
measure x2 = free(lambda2) * xi1 + err(free(theta_x2))
measure x3 = free(lambda3) * xi1 + err(free(theta_x3))
measure x4 = 1             * xi2 + err(free(theta_x4))
measure x5 = free(lambda5) * xi2 + err(free(theta_x5))
measure x6 = free(lambda6) * xi2 + err(free(theta_x6))
measure y1 = 1             * eta + err(free(theta_y1))
measure y2 = free(mu2)     * eta + err(free(theta_y2))
measure y3 = free(mu3)     * eta + err(free(theta_y3))

struct eta = free(gamma1)*xi1 + free(gamma2)*xi2 + free(omega11)*xi1^2 + free(omega12)*xi1*xi2 + free(omega22)*xi2^2 + zeta(free(psi))

cov xi1 xi1 = free(phi11)
cov xi1 xi2 = free(phi12)
cov xi2 xi2 = free(phi22)
)";

inline constexpr const char* kInteractionModel = R"(# Latent interaction model: eta1, eta2 exogenous; eta3 depends on their
# product; eta4 depends linearly on eta3. Each latent has three indicators.
latent exo   eta1 eta2
latent endo  eta3 eta4
manifest x   y1 y2 y3 y4 y5 y6
manifest y   y7 y8 y9 y10 y11 y12

measure y1  = 1        * eta1 + err(free(theta1))
measure y2  = free(c2) * eta1 + err(free(theta2))
measure y3  = free(c3) * eta1 + err(free(theta3))
measure y4  = 1        * eta2 + err(free(theta4))
measure y5  = free(c5) * eta2 + err(free(theta5))
measure y6  = free(c6) * eta2 + err(free(theta6))
measure y7  = 1        * eta3 + err(free(theta7))
measure y8  = free(c8) * eta3 + err(free(theta8))
measure y9  = free(c9) * eta3 + err(free(theta9))
measure y10 = 1         * eta4 + err(free(theta10))
measure y11 = free(c11) * eta4 + err(free(theta11))
measure y12 = free(c12) * eta4 + err(free(theta12))

struct eta3 = free(B1)*eta1 + free(B2)*eta2 + free(B3)*eta1*eta2 + zeta(free(psi3))
struct eta4 = free(B4)*eta3 + zeta(free(psi4))

cov eta1 eta1 = free(phi11)
cov eta1 eta2 = free(phi12)
cov eta2 eta2 = free(phi22)
)";

enum class Generator { interaction, ganzach };

inline std::string_view to_string(Generator g) { return g == Generator::ganzach ? "ganzach" : "interaction"; }

inline Generator parse_generator(std::string_view s) {
  if (s == "ganzach") return Generator::ganzach;
  if (s == "interaction") return Generator::interaction;
  throw std::invalid_argument("unknown generator '" + std::string(s) + "' (expected ganzach or interaction)");
}

inline SemModel generator_model(Generator g) {
  return parse_model(std::string(g == Generator::ganzach ? kGanzachModel : kInteractionModel));
}

/// Population values used by each generator, keyed by parameter name.
inline std::map<std::string, double> true_values(Generator g) {
  if (g == Generator::ganzach) {
    std::map<std::string, double> v{
        {"lambda2", 0.7}, {"lambda3", 1.2}, {"lambda5", 0.5}, {"lambda6", 0.9}, {"mu2", 0.8},      {"mu3", 1.3},
        {"gamma1", 0.3},  {"gamma2", 0.5},  {"omega11", 0.2}, {"omega12", 0.4}, {"omega22", 0.7},  {"psi", 0.09},
        {"phi11", 1.0},   {"phi12", 0.2},   {"phi22", 1.0},
    };
    for (int i = 1; i <= 6; ++i) v["theta_x" + std::to_string(i)] = 0.01;
    for (int i = 1; i <= 3; ++i) v["theta_y" + std::to_string(i)] = 0.01;
    return v;
  }
  std::map<std::string, double> v{
      {"c2", 0.5},   {"c3", 0.7},   {"c5", 0.7},   {"c6", 0.4},    {"c8", 1.2},    {"c9", 0.4},
      {"c11", 0.8},  {"c12", 0.9},  {"B1", 0.1},   {"B2", 0.3},    {"B3", 0.2},    {"B4", 0.7},
      {"psi3", 0.04}, {"psi4", 0.01}, {"phi11", 1.2}, {"phi12", 0.4}, {"phi22", 0.8},
  };
  // Error sd 0.1·(1 + i mod 3), so the variance is 0.01, 0.04 or 0.09.
  static constexpr std::array<double, 3> error_variance{0.01, 0.04, 0.09};
  for (int i = 1; i <= 12; ++i) v["theta" + std::to_string(i)] = error_variance[static_cast<std::size_t>(i % 3)];
  return v;
}

/// Parameters reported in the bias tables.
inline std::vector<std::string> tracked_parameters(Generator g) {
  if (g == Generator::ganzach) return {"gamma1", "gamma2", "omega11", "omega12", "omega22"};
  return {"B1", "B2", "B3", "B4"};
}

/// θ vector in the model's parameter order from a name → value map.
inline std::vector<double> theta_from_values(const SemModel& model, const std::map<std::string, double>& values) {
  std::vector<double> theta;
  theta.reserve(model.params.size());
  for (const auto& p : model.params) {
    auto it = values.find(p.name);
    if (it == values.end()) throw std::invalid_argument("no value given for parameter '" + p.name + "'");
    theta.push_back(it->second);
  }
  return theta;
}

/// η1, η2 ~ N(0, [[1.2, .4], [.4, .8]]);
/// η3 = .1η1 + .3η2 + .2η1η2 + N(0, .2);  η4 = .7η3 + N(0, .1);
/// y_i = c_i·η_⌈i/3⌉ + N(0, .1·(1 + i mod 3)).
inline Dataset generate_interaction(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<double, 12> c{1, 0.5, 0.7, 1, 0.7, 0.4, 1, 1.2, 0.4, 1, 0.8, 0.9};
  Eigen::Matrix2d cov;
  cov << 1.2, 0.4, 0.4, 0.8;
  const MultivariateNormal latent(cov);
  Rng rng(seed);
  Dataset d;
  for (int i = 1; i <= 12; ++i) d.names.push_back("y" + std::to_string(i));
  d.values.resize(static_cast<Eigen::Index>(n), 12);
  Eigen::VectorXd e(2);
  for (std::size_t r = 0; r < n; ++r) {
    latent.sample(rng, e);
    std::array<double, 4> eta{e(0), e(1), 0.0, 0.0};
    eta[2] = 0.1 * eta[0] + 0.3 * eta[1] + 0.2 * eta[0] * eta[1] + rng.normal(0.0, 0.2);
    eta[3] = 0.7 * eta[2] + rng.normal(0.0, 0.1);
    for (int i = 1; i <= 12; ++i)
      d.values(static_cast<Eigen::Index>(r), i - 1) =
          c[i - 1] * eta[(i - 1) / 3] + rng.normal(0.0, 0.1 * (1 + (i % 3)));
  }
  return d;
}

/// ξ ~ N(0, [[1, .2], [.2, 1]]);
/// η = .3ξ1 + .5ξ2 + .2ξ1² + .4ξ1ξ2 + .7ξ2² + N(0, .3);
/// y_i = d_i·η + N(0, .1), x_i = c_i·ξ_{1 or 2} + N(0, .1). Columns x1..x6, y1..y3.
inline Dataset generate_ganzach(std::size_t n, std::uint64_t seed) {
  static constexpr std::array<double, 6> c{1, 0.7, 1.2, 1, 0.5, 0.9};
  static constexpr std::array<double, 3> dy{1, 0.8, 1.3};
  Eigen::Matrix2d cov;
  cov << 1.0, 0.2, 0.2, 1.0;
  const MultivariateNormal latent(cov);
  Rng rng(seed);
  Dataset d;
  for (int i = 1; i <= 6; ++i) d.names.push_back("x" + std::to_string(i));
  for (int i = 1; i <= 3; ++i) d.names.push_back("y" + std::to_string(i));
  d.values.resize(static_cast<Eigen::Index>(n), 9);
  Eigen::VectorXd xi(2);
  for (std::size_t r = 0; r < n; ++r) {
    latent.sample(rng, xi);
    const double x1 = xi(0);
    const double x2 = xi(1);
    const double eta = 0.3 * x1 + 0.5 * x2 + 0.2 * x1 * x1 + 0.4 * x1 * x2 + 0.7 * x2 * x2 + rng.normal(0.0, 0.3);
    const auto row = static_cast<Eigen::Index>(r);
    for (int i = 0; i < 3; ++i) d.values(row, 6 + i) = dy[i] * eta + rng.normal(0.0, 0.1);
    for (int i = 0; i < 6; ++i) d.values(row, i) = c[i] * (i < 3 ? x1 : x2) + rng.normal(0.0, 0.1);
  }
  return d;
}

inline Dataset generate(Generator g, std::size_t n, std::uint64_t seed) {
  return g == Generator::ganzach ? generate_ganzach(n, seed) : generate_interaction(n, seed);
}

/// One replication study: generate → fit per method → error θ̂ − θ_true.
struct StudySpec {
  Generator generator = Generator::ganzach;
  std::size_t n = 1000;
  std::size_t reps = 20;
  std::vector<Method> methods{Method::uls, Method::uls3, Method::gls, Method::wls};
  std::uint64_t seed = 0;
  std::map<std::string, double> true_values;  // empty: the generator's own
  /// The generators draw every indicator without an intercept, so their raw
  /// moments carry usable mean information.
  MomentDefinition moments = MomentDefinition::raw_minus_mean_product;
  int restarts = 4;
  OptimizerOptions optimizer;
  unsigned threads = 1;
};

/// Per (parameter, method) summary over converged replications.
struct BiasCell {
  double mean = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> sd;  // needs two converged replications
  std::size_t count = 0;

  friend bool operator==(const BiasCell& a, const BiasCell& b) {
    const auto same = [](double x, double y) { return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y); };
    if (a.count != b.count || !same(a.mean, b.mean) || a.sd.has_value() != b.sd.has_value()) return false;
    return !a.sd || same(*a.sd, *b.sd);
  }
};

struct ReplicateRecord {
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  Method method = Method::uls;
  bool converged = false;
  double objective_value = 0.0;
  std::vector<double> errors;  // tracked parameters, in table row order

  friend bool operator==(const ReplicateRecord& a, const ReplicateRecord& b) {
    if (a.rep != b.rep || a.seed != b.seed || a.method != b.method || a.converged != b.converged) return false;
    if (std::bit_cast<std::uint64_t>(a.objective_value) != std::bit_cast<std::uint64_t>(b.objective_value)) return false;
    if (a.errors.size() != b.errors.size()) return false;
    for (std::size_t i = 0; i < a.errors.size(); ++i)
      if (std::bit_cast<std::uint64_t>(a.errors[i]) != std::bit_cast<std::uint64_t>(b.errors[i])) return false;
    return true;
  }
};

struct BiasTable {
  std::vector<std::string> parameters;
  std::vector<Method> methods;
  std::vector<std::vector<BiasCell>> cells;  // [parameter][method]
  std::vector<std::size_t> non_converged;    // per method
  std::vector<ReplicateRecord> replicates;   // rep-major, then method

  [[nodiscard]] const BiasCell& cell(std::string_view parameter, Method method) const {
    for (std::size_t i = 0; i < parameters.size(); ++i) {
      if (parameters[i] != parameter) continue;
      for (std::size_t j = 0; j < methods.size(); ++j)
        if (methods[j] == method) return cells[i][j];
    }
    throw std::out_of_range("no bias cell for " + std::string(parameter) + " / " + std::string(to_string(method)));
  }

  friend bool operator==(const BiasTable&, const BiasTable&) = default;
};

namespace detail {

inline BiasCell summarize(const std::vector<double>& xs) {
  BiasCell c;
  c.count = xs.size();
  if (xs.empty()) return c;
  double sum = 0.0;
  for (double x : xs) sum += x;
  c.mean = sum / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - c.mean) * (x - c.mean);
    c.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return c;
}

}  // namespace detail

/// Runs the study. Replication r draws its data from derive_seed(seed, {r})
/// and its restarts from derive_seed(seed, {r, method}), so the table does not
/// depend on `threads`.
inline BiasTable run_study(const StudySpec& spec) {
  if (spec.methods.empty()) throw std::invalid_argument("study needs at least one method");
  if (spec.reps < 1) throw std::invalid_argument("study needs reps >= 1");
  if (spec.n < 10) throw std::invalid_argument("study needs n >= 10");
  const SemModel model = generator_model(spec.generator);
  const auto truth_map = spec.true_values.empty() ? true_values(spec.generator) : spec.true_values;
  std::uint32_t order = 2;
  for (Method m : spec.methods) order = std::max(order, required_order(m));
  const auto moments = std::make_shared<const CompiledMoments>(model, order, spec.moments);

  BiasTable table;
  table.parameters = tracked_parameters(spec.generator);
  table.methods = spec.methods;
  std::vector<double> truth;
  for (const auto& p : table.parameters) {
    auto it = truth_map.find(p);
    if (it == truth_map.end()) throw std::invalid_argument("no true value for tracked parameter '" + p + "'");
    truth.push_back(it->second);
  }

  const std::size_t per_rep = spec.methods.size();
  table.replicates.resize(spec.reps * per_rep);
  auto run_rep = [&](std::size_t r) {
    const std::uint64_t data_seed = derive_seed(spec.seed, {r});
    const Dataset data = prepare_data(generate(spec.generator, spec.n, data_seed), spec.moments);
    const EmpiricalMoments empirical = compute_moments(data, order);
    for (std::size_t j = 0; j < per_rep; ++j) {
      ReplicateRecord& rec = table.replicates[r * per_rep + j];
      rec.rep = r;
      rec.seed = data_seed;
      rec.method = spec.methods[j];
      PipelineOptions po;
      po.optimizer = spec.optimizer;
      po.restarts = spec.restarts;
      po.seed = derive_seed(spec.seed, {r, static_cast<std::uint64_t>(spec.methods[j]) + 1});
      try {
        const PipelineResult res = fit_pipeline(moments, data, empirical, spec.methods[j], po);
        rec.converged = res.fit.converged;
        rec.objective_value = res.fit.objective_value;
        for (std::size_t i = 0; i < table.parameters.size(); ++i)
          rec.errors.push_back(res.fit.at(table.parameters[i]) - truth[i]);
      } catch (const std::exception&) {
        rec.converged = false;
        rec.objective_value = std::numeric_limits<double>::quiet_NaN();
      }
    }
  };

  const unsigned threads = std::max(1u, spec.threads);
  if (threads == 1) {
    for (std::size_t r = 0; r < spec.reps; ++r) run_rep(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t r = next++; r < spec.reps; r = next++) run_rep(r);
      });
    for (auto& t : pool) t.join();
  }

  table.cells.assign(table.parameters.size(), std::vector<BiasCell>(per_rep));
  table.non_converged.assign(per_rep, 0);
  for (std::size_t j = 0; j < per_rep; ++j) {
    std::vector<std::vector<double>> errs(table.parameters.size());
    for (std::size_t r = 0; r < spec.reps; ++r) {
      const auto& rec = table.replicates[r * per_rep + j];
      if (!rec.converged) {
        ++table.non_converged[j];
        continue;
      }
      for (std::size_t i = 0; i < errs.size(); ++i) errs[i].push_back(rec.errors[i]);
    }
    for (std::size_t i = 0; i < errs.size(); ++i) table.cells[i][j] = detail::summarize(errs[i]);
  }
  return table;
}

/// Aligned text in the "mean(sd)" style; sd prints NA below two converged
/// replications.
inline std::string format_bias_table(const BiasTable& t) {
  const auto cell_text = [](const BiasCell& c) {
    if (c.count == 0) return std::string("NA");
    char buf[64];
    if (c.sd) std::snprintf(buf, sizeof buf, "%.3f(%.3f)", c.mean, *c.sd);
    else std::snprintf(buf, sizeof buf, "%.3f(NA)", c.mean);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Variable"});
  for (Method m : t.methods) rows.back().emplace_back(to_string(m));
  for (std::size_t i = 0; i < t.parameters.size(); ++i) {
    rows.push_back({t.parameters[i]});
    for (const auto& c : t.cells[i]) rows.back().push_back(cell_text(c));
  }
  rows.push_back({"non-converged"});
  for (auto k : t.non_converged) rows.back().push_back(std::to_string(k));

  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      out += c == 0 ? row[c] + pad : "  " + pad + row[c];
    }
    out += '\n';
  }
  return out;
}

}  // namespace polysem
