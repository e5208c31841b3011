#pragma once

// Moment-discrepancy objectives and the estimation pipeline.
//
//   ULS(k):  Σ_{k'=2..k} 2^{-(k'-1)} Σ_{i1..ik'} (Σ^(k')_{i} − S_{i})²
//            (full index sums; computed on canonical tuples × orbit size)
//   WLS:     (s − σ(θ))' W⁻¹ (s − σ(θ)) over half-vectorized covariances
//   GLS:     WLS with the normal-theory weight built from S

#include "polysem/empirical.hpp"
#include "polysem/model.hpp"
#include "polysem/optimize.hpp"
#include "polysem/rng.hpp"
#include "polysem/wick.hpp"

#include <Eigen/Dense>

#include <future>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace polysem {

/// One implied moment with its nonzero partial derivatives, in double form.
struct CompiledEntry {
  CompiledPolynomial value;
  std::vector<std::pair<std::uint32_t, CompiledPolynomial>> partials;
};

/// Implied tensors of orders 2..max_order, compiled for fast evaluation.
/// Built once per model and shared by every objective on that model.
class CompiledMoments {
 public:
  CompiledMoments(const SemModel& model, std::uint32_t max_order,
                  MomentDefinition definition = MomentDefinition::central, unsigned threads = 1)
      : space_(free_parameters(model)), model_(model), max_order_(max_order), definition_(definition) {
    if (max_order < 2) throw std::invalid_argument("max_order must be at least 2");
    MomentEngine engine(model);
    for (std::uint32_t k = 2; k <= max_order; ++k) {
      auto tensor = engine.implied_cov_tensor(k, definition, threads);
      std::vector<CompiledEntry> compiled;
      compiled.reserve(tensor.size());
      for (const auto& poly : tensor.entries()) {
        CompiledEntry e{CompiledPolynomial(poly), {}};
        for (ParamId s : poly.symbols()) e.partials.emplace_back(s.value, CompiledPolynomial(differentiate(poly, s)));
        compiled.push_back(std::move(e));
      }
      symbolic_.emplace(k, std::move(tensor));
      compiled_.emplace(k, std::move(compiled));
    }
  }

  [[nodiscard]] const ParameterSpace& space() const { return space_; }
  [[nodiscard]] const SemModel& model() const { return model_; }
  [[nodiscard]] std::uint32_t max_order() const { return max_order_; }
  [[nodiscard]] MomentDefinition definition() const { return definition_; }
  [[nodiscard]] std::uint32_t dim() const { return static_cast<std::uint32_t>(model_.m()); }

  [[nodiscard]] const MomentTensor<Polynomial>& symbolic(std::uint32_t k) const { return symbolic_.at(k); }
  [[nodiscard]] const std::vector<CompiledEntry>& compiled(std::uint32_t k) const {
    auto it = compiled_.find(k);
    if (it == compiled_.end())
      throw std::invalid_argument("implied moments of order " + std::to_string(k) + " were not compiled");
    return it->second;
  }

  /// Evaluated implied tensor at θ.
  [[nodiscard]] MomentTensor<double> evaluate_tensor(std::uint32_t k, std::span<const double> theta) const {
    const auto& entries = compiled(k);
    MomentTensor<double> out(dim(), k);
    for (std::size_t t = 0; t < entries.size(); ++t) out.entries()[t] = entries[t].value(theta);
    return out;
  }

  /// Empirical moments equal to the implied moments at θ (zero-residual data).
  [[nodiscard]] EmpiricalMoments implied_as_empirical(std::span<const double> theta, std::size_t n = 0) const {
    EmpiricalMoments e;
    e.n = n;
    for (std::uint32_t k = 2; k <= max_order_; ++k) e.tensors.emplace(k, evaluate_tensor(k, theta));
    return e;
  }

 private:
  ParameterSpace space_;
  SemModel model_;
  std::uint32_t max_order_;
  MomentDefinition definition_;
  std::map<std::uint32_t, MomentTensor<Polynomial>> symbolic_;
  std::map<std::uint32_t, std::vector<CompiledEntry>> compiled_;
};

enum class ObjectiveKind { uls, ulsk, gls, wls };

inline std::string objective_name(ObjectiveKind kind, std::uint32_t order) {
  switch (kind) {
    case ObjectiveKind::uls: return "ULS";
    case ObjectiveKind::ulsk: return "ULS" + std::to_string(order);
    case ObjectiveKind::gls: return "GLS";
    case ObjectiveKind::wls: return "WLS";
  }
  return "?";
}

/// A compiled discrepancy function of θ with analytic gradient.
class Objective {
 public:
  [[nodiscard]] ObjectiveKind kind() const { return kind_; }
  [[nodiscard]] std::uint32_t order() const { return order_; }
  [[nodiscard]] std::string name() const { return objective_name(kind_, order_); }
  [[nodiscard]] const ParameterSpace& space() const { return moments_->space(); }
  [[nodiscard]] std::size_t dimension() const { return space().size(); }
  [[nodiscard]] const CompiledMoments& moments() const { return *moments_; }

  [[nodiscard]] double value(std::span<const double> theta) const { return evaluate(theta, nullptr); }

  /// f(θ); when `grad` is non-null it receives ∇f(θ) (resized to dimension()).
  double evaluate(std::span<const double> theta, Eigen::VectorXd* grad) const {
    if (theta.size() != dimension()) throw std::invalid_argument("parameter vector has wrong size");
    if (grad) grad->setZero(static_cast<Eigen::Index>(dimension()));
    if (weight_) return evaluate_weighted(theta, grad);
    double total = 0.0;
    for (const auto& block : blocks_) {
      for (std::size_t t = 0; t < block.entries->size(); ++t) {
        const CompiledEntry& e = (*block.entries)[t];
        const double r = e.value(theta) - block.empirical[t];
        const double w = block.weights[t];
        total += w * r * r;
        if (grad)
          for (const auto& [id, d] : e.partials) (*grad)(id) += 2.0 * w * r * d(theta);
      }
    }
    return total;
  }

  /// Residual vector s − σ(θ) in half-vectorized order (weighted kinds only).
  [[nodiscard]] Eigen::VectorXd half_vec_residual(std::span<const double> theta) const {
    const auto& entries = moments_->compiled(2);
    Eigen::VectorXd r(static_cast<Eigen::Index>(hv_index_.size()));
    for (std::size_t a = 0; a < hv_index_.size(); ++a)
      r(static_cast<Eigen::Index>(a)) = hv_empirical_[a] - entries[hv_index_[a]].value(theta);
    return r;
  }

  [[nodiscard]] double ridge() const { return weight_ ? weight_->ridge : 0.0; }

  friend Objective build_uls_k(std::shared_ptr<const CompiledMoments>, const EmpiricalMoments&, std::uint32_t);
  friend Objective build_wls(std::shared_ptr<const CompiledMoments>, const EmpiricalMoments&, const WeightMatrix&,
                             ObjectiveKind);

 private:
  struct Block {
    const std::vector<CompiledEntry>* entries = nullptr;
    std::vector<double> empirical;
    std::vector<double> weights;
  };

  double evaluate_weighted(std::span<const double> theta, Eigen::VectorXd* grad) const {
    const auto& entries = moments_->compiled(2);
    const Eigen::VectorXd r = half_vec_residual(theta);
    const Eigen::VectorXd wr = weight_->solve(r);
    if (grad) {
      // ∂/∂θ r'W⁻¹r = −2 J'W⁻¹r with J = ∂σ/∂θ.
      for (std::size_t a = 0; a < hv_index_.size(); ++a) {
        const double c = -2.0 * wr(static_cast<Eigen::Index>(a));
        for (const auto& [id, d] : entries[hv_index_[a]].partials) (*grad)(id) += c * d(theta);
      }
    }
    return r.dot(wr);
  }

  ObjectiveKind kind_ = ObjectiveKind::uls;
  std::uint32_t order_ = 2;
  std::shared_ptr<const CompiledMoments> moments_;
  std::vector<Block> blocks_;
  std::optional<FactoredWeight> weight_;
  std::vector<std::size_t> hv_index_;  // half-vec position -> canonical order-2 entry
  std::vector<double> hv_empirical_;
};

/// Higher-order ULS; k = 2 is plain ULS, ½·tr((S − Σ)²).
inline Objective build_uls_k(std::shared_ptr<const CompiledMoments> moments, const EmpiricalMoments& empirical,
                             std::uint32_t k) {
  if (k < 2) throw std::invalid_argument("ULS order must be at least 2");
  if (k > moments->max_order())
    throw std::invalid_argument("implied moments compiled only up to order " + std::to_string(moments->max_order()));
  Objective obj;
  obj.kind_ = k == 2 ? ObjectiveKind::uls : ObjectiveKind::ulsk;
  obj.order_ = k;
  for (std::uint32_t order = 2; order <= k; ++order) {
    const auto& s = empirical.order(order);
    if (s.dim() != moments->dim()) throw std::invalid_argument("empirical moments have the wrong dimension");
    Objective::Block block;
    block.entries = &moments->compiled(order);
    block.empirical = s.entries();
    const double level_weight = std::ldexp(1.0, -static_cast<int>(order - 1));
    for (const auto& t : s.tuples()) block.weights.push_back(level_weight * static_cast<double>(orbit_size(t)));
    obj.blocks_.push_back(std::move(block));
  }
  obj.moments_ = std::move(moments);
  return obj;
}

/// Weighted least squares on the half-vectorized covariance. `kind` labels
/// the weight's origin (GLS for normal theory, WLS otherwise).
inline Objective build_wls(std::shared_ptr<const CompiledMoments> moments, const EmpiricalMoments& empirical,
                           const WeightMatrix& weight, ObjectiveKind kind = ObjectiveKind::wls) {
  const auto m = moments->dim();
  const auto pairs = half_vec_pairs(m);
  if (weight.p() != pairs.size())
    throw std::invalid_argument("weight matrix dimension " + std::to_string(weight.p()) + " does not match m(m+1)/2 = " +
                                std::to_string(pairs.size()));
  const auto& s = empirical.order(2);
  if (s.dim() != m) throw std::invalid_argument("empirical moments have the wrong dimension");
  Objective obj;
  obj.kind_ = kind;
  obj.order_ = 2;
  obj.weight_ = factor_weight(weight);
  MomentTensor<double> probe(m, 2);
  for (const auto& [i, j] : pairs) {
    const std::array<std::uint32_t, 2> t{i, j};
    obj.hv_index_.push_back(probe.rank(t));
    obj.hv_empirical_.push_back(s.at(t));
  }
  obj.moments_ = std::move(moments);
  return obj;
}

inline Objective build_gls(std::shared_ptr<const CompiledMoments> moments, const EmpiricalMoments& empirical) {
  return build_wls(std::move(moments), empirical, normal_theory_weight(empirical.order(2)), ObjectiveKind::gls);
}

/// ∇f(θ), analytic.
inline Eigen::VectorXd gradient(const Objective& obj, std::span<const double> theta) {
  Eigen::VectorXd g;
  obj.evaluate(theta, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> theta;
  double objective_value = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  StopReason reason = StopReason::max_iterations;
  int start_point_id = 0;
  std::string method;

  [[nodiscard]] double at(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return theta[i];
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  }
};

inline Eigen::VectorXd lower_bounds(const ParameterSpace& space) {
  return Eigen::Map<const Eigen::VectorXd>(space.lower_bounds.data(), static_cast<Eigen::Index>(space.size()));
}

/// Minimizes obj from `init`. Throws std::invalid_argument if init violates a
/// bound or the objective is not finite there; other failures come back as a
/// non-converged FitResult.
inline FitResult fit(const Objective& obj, std::span<const double> init, const OptimizerOptions& options = {},
                     int start_point_id = 0) {
  const auto& space = obj.space();
  if (init.size() != space.size()) throw std::invalid_argument("initial vector has wrong size");
  for (std::size_t i = 0; i < init.size(); ++i)
    if (!(init[i] >= space.lower_bounds[i]))
      throw std::invalid_argument("initial value of '" + space.symbols[i].name + "' violates its lower bound");
  const ValueAndGradient f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return obj.evaluate(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), &g);
  };
  Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
  const OptimizerResult r = minimize_bfgs(f, x0, lower_bounds(space), options);
  FitResult out;
  for (const auto& s : space.symbols) out.names.push_back(s.name);
  out.theta.assign(r.x.data(), r.x.data() + r.x.size());
  out.objective_value = r.value;
  out.converged = r.converged();
  out.iterations = r.iterations;
  out.gradient_norm = r.gradient_norm;
  out.reason = r.reason;
  out.start_point_id = start_point_id;
  out.method = obj.name();
  return out;
}

/// Default start: loadings 1, structural coefficients 0.1, error variances
/// half the matching manifest variance (ζ_j uses η_j's first indicator),
/// diag cov(ξ) 1 and off-diagonal 0.
inline std::vector<double> default_init(const SemModel& model, const MomentTensor<double>& sample_cov) {
  std::vector<double> theta(model.params.size(), 0.0);
  const auto set = [&](const EntrySpec& e, double v) {
    if (e.is_free()) theta[e.param().value] = v;
  };
  const auto var = [&](std::size_t i) {
    const auto idx = static_cast<std::uint32_t>(i);
    const double v = sample_cov.at(std::array{idx, idx});
    return v > 0.0 ? v : 1.0;
  };
  for (const auto& p : model.params)
    if (p.kind == ParamKind::loading_x || p.kind == ParamKind::loading_y) theta[p.id.value] = 1.0;
    else if (p.kind == ParamKind::structural_coef) theta[p.id.value] = 0.1;
  for (std::size_t i = 0; i < model.m1(); ++i) set(model.theta_delta[i], 0.5 * var(i));
  for (std::size_t i = 0; i < model.m2(); ++i) set(model.theta_epsilon[i], 0.5 * var(model.m1() + i));
  for (std::size_t j = 0; j < model.l(); ++j) {
    double v = 1.0;
    for (std::size_t i = 0; i < model.m2(); ++i) {
      if (!model.lambda_y[i][j].is_fixed_zero()) {
        v = 0.5 * var(model.m1() + i);
        break;
      }
    }
    set(model.psi[j], v);
  }
  for (std::size_t i = 0; i < model.k(); ++i)
    for (std::size_t j = i; j < model.k(); ++j) set(model.phi(i, j), i == j ? 1.0 : 0.0);
  const auto space = free_parameters(model);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = std::max(theta[i], space.lower_bounds[i]);
  return theta;
}

/// Random restart around `base`: +0.5·N(0,1) on structural coefficients,
/// +0.2·N(0,1) on loadings and cov(ξ) off-diagonals, ×exp(0.5·N(0,1)) on
/// variances.
inline std::vector<double> perturbed_init(const SemModel& model, std::vector<double> base, Rng& rng) {
  const auto space = free_parameters(model);
  for (const auto& p : model.params) {
    double& v = base[p.id.value];
    const bool bounded = std::isfinite(space.lower_bounds[p.id.value]);
    if (bounded) v *= std::exp(0.5 * rng.normal());
    else if (p.kind == ParamKind::structural_coef) v += 0.5 * rng.normal();
    else v += 0.2 * rng.normal();
    v = std::max(v, space.lower_bounds[p.id.value]);
  }
  return base;
}

/// Central moments want centered data; the raw definition wants the data
/// as observed.
inline Dataset prepare_data(Dataset d, MomentDefinition def) {
  return def == MomentDefinition::central ? center(std::move(d)) : d;
}

enum class Method { uls, uls3, gls, wls };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::uls: return "ULS";
    case Method::uls3: return "ULS3";
    case Method::gls: return "GLS";
    case Method::wls: return "WLS";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  std::string lower(s);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "uls") return Method::uls;
  if (lower == "uls3") return Method::uls3;
  if (lower == "gls") return Method::gls;
  if (lower == "wls" || lower == "fwls" || lower == "adf") return Method::wls;
  throw std::invalid_argument("unknown method '" + std::string(s) + "' (expected uls, uls3, gls or wls)");
}

inline std::uint32_t required_order(Method m) { return m == Method::uls3 ? 3 : 2; }

/// Start values whose objectives agree to this relative tolerance count as
/// ties. Directions the data do not identify leave the objective flat, and
/// rounding alone should not pick the winner there.
inline constexpr double kObjectiveTie = 1e-8;

struct PipelineOptions {
  OptimizerOptions optimizer;
  int restarts = 4;
  std::uint64_t seed = 0;
  bool warm_start = true;
  unsigned threads = 1;
};

struct PipelineResult {
  FitResult fit;                   // final estimate for the requested method
  FitResult uls;                   // best stage-1 ULS fit
  std::vector<FitResult> starts;   // every stage-1 attempt, by start id
};

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stage 1: ULS from the default start plus `restarts` perturbed starts; the
/// best converged value wins (ties by start id). Stage 2 (ULS3/GLS/WLS)
/// starts from that ULS estimate unless warm_start is off.
/// `data` and `empirical` must be prepared for the moment definition the
/// moments were compiled with (see prepare_data); WLS reads data's fourth
/// moments about the mean.
inline PipelineResult fit_pipeline(std::shared_ptr<const CompiledMoments> moments, const Dataset& data,
                                   const EmpiricalMoments& empirical, Method method,
                                   const PipelineOptions& options = {}) {
  const SemModel& model = moments->model();
  if (method == Method::uls3 && empirical.tensors.count(3) == 0)
    throw std::invalid_argument("ULS3 needs third-order empirical moments");

  // Build the stage-2 objective first so precondition failures surface early.
  std::optional<Objective> target;
  switch (method) {
    case Method::uls: break;
    case Method::uls3: target = build_uls_k(moments, empirical, 3); break;
    case Method::gls: target = build_gls(moments, empirical); break;
    case Method::wls: target = build_wls(moments, empirical, browne_weight(data)); break;
  }

  const Objective uls = build_uls_k(moments, empirical, 2);
  const std::vector<double> base = default_init(model, empirical.order(2));

  std::vector<std::vector<double>> starts{base};
  Rng rng(derive_seed(options.seed, {0x5e5741ULL}));  // restart stream
  for (int r = 0; r < options.restarts; ++r) starts.push_back(perturbed_init(model, base, rng));

  PipelineResult out;
  out.starts.resize(starts.size());
  std::vector<bool> ok(starts.size(), false);
  auto run_one = [&](std::size_t i) {
    try {
      out.starts[i] = fit(uls, starts[i], options.optimizer, static_cast<int>(i));
      ok[i] = std::isfinite(out.starts[i].objective_value);
    } catch (const std::invalid_argument&) {
      ok[i] = false;
    }
  };
  if (options.threads > 1) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = 0; i < starts.size(); ++i) jobs.push_back(std::async(std::launch::async, run_one, i));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t i = 0; i < starts.size(); ++i) run_one(i);
  }

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (!ok[i]) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& a = out.starts[i];
    const auto& b = out.starts[*best];
    if (a.converged != b.converged) {
      if (a.converged) best = i;
    } else if (a.objective_value < b.objective_value - kObjectiveTie * std::abs(b.objective_value)) {
      best = i;
    }
  }
  if (!best) throw PipelineError("all ULS starting points failed");
  out.uls = out.starts[*best];

  if (!target) {
    out.fit = out.uls;
    return out;
  }
  const std::vector<double>& init = options.warm_start ? out.uls.theta : base;
  out.fit = fit(*target, init, options.optimizer, options.warm_start ? out.uls.start_point_id : 0);
  return out;
}

}  // namespace polysem
