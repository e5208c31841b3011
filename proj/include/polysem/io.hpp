#pragma once

// JSON forms of fit results, moment tensors, bias tables and the
// reproducibility record that accompanies every CLI run.

#include "polysem/estimate.hpp"
#include "polysem/simulate.hpp"
#include "polysem/version.hpp"

#include <json.hpp>

#include <string>

namespace polysem {

using Json = nlohmann::ordered_json;

/// Shortest text that reads back to the same double. Text and JSON output
/// both use it so the two never disagree.
inline std::string format_number(double v) { return Json(v).dump(); }

inline Json to_json(const OptimizerOptions& o) {
  return {{"gradient_tolerance", o.gradient_tolerance},
          {"stagnation_tolerance", o.stagnation_tolerance},
          {"max_iterations", o.max_iterations}};
}

inline Json to_json(const FitResult& r) {
  Json estimates = Json::object();
  for (std::size_t i = 0; i < r.names.size(); ++i) estimates[r.names[i]] = r.theta[i];
  return {{"method", r.method},
          {"estimates", estimates},
          {"objective_value", r.objective_value},
          {"converged", r.converged},
          {"stop_reason", std::string(to_string(r.reason))},
          {"iterations", r.iterations},
          {"gradient_norm", r.gradient_norm},
          {"start_point_id", r.start_point_id}};
}

inline FitResult fit_result_from_json(const Json& j) {
  FitResult r;
  r.method = j.at("method").get<std::string>();
  for (const auto& [name, value] : j.at("estimates").items()) {
    r.names.push_back(name);
    r.theta.push_back(value.get<double>());
  }
  r.objective_value = j.at("objective_value").get<double>();
  r.converged = j.at("converged").get<bool>();
  const auto reason = j.at("stop_reason").get<std::string>();
  for (StopReason s : {StopReason::gradient, StopReason::stagnation, StopReason::max_iterations,
                       StopReason::line_search_failure})
    if (to_string(s) == reason) r.reason = s;
  r.iterations = j.at("iterations").get<int>();
  r.gradient_norm = j.at("gradient_norm").get<double>();
  r.start_point_id = j.at("start_point_id").get<int>();
  return r;
}

/// Entries keyed by canonical index tuple, with variable names alongside.
template <typename T, typename Render>
Json tensor_to_json(const MomentTensor<T>& t, const std::vector<std::string>& names, Render render) {
  Json entries = Json::array();
  auto tuples = t.tuples();
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    Json vars = Json::array();
    for (auto v : tuples[i]) vars.push_back(names.at(v));
    entries.push_back({{"index", tuples[i]}, {"variables", vars}, {"value", render(t.entries()[i])}});
  }
  return {{"order", t.order()}, {"dim", t.dim()}, {"variables", names}, {"entries", entries}};
}

inline Json to_json(const MomentTensor<double>& t, const std::vector<std::string>& names) {
  return tensor_to_json(t, names, [](double v) { return Json(v); });
}

inline Json to_json(const BiasTable& t) {
  Json methods = Json::array();
  for (Method m : t.methods) methods.push_back(std::string(to_string(m)));
  Json rows = Json::array();
  for (std::size_t i = 0; i < t.parameters.size(); ++i) {
    Json cells = Json::object();
    for (std::size_t j = 0; j < t.methods.size(); ++j) {
      const BiasCell& c = t.cells[i][j];
      cells[std::string(to_string(t.methods[j]))] = {
          {"mean", c.count ? Json(c.mean) : Json(nullptr)}, {"sd", c.sd ? Json(*c.sd) : Json(nullptr)}, {"n", c.count}};
    }
    rows.push_back({{"parameter", t.parameters[i]}, {"cells", cells}});
  }
  Json nonconv = Json::object();
  for (std::size_t j = 0; j < t.methods.size(); ++j) nonconv[std::string(to_string(t.methods[j]))] = t.non_converged[j];
  Json reps = Json::array();
  for (const auto& r : t.replicates) {
    Json errors = Json::object();
    for (std::size_t i = 0; i < r.errors.size(); ++i) errors[t.parameters[i]] = r.errors[i];
    reps.push_back({{"rep", r.rep},
                    {"data_seed", r.seed},
                    {"method", std::string(to_string(r.method))},
                    {"converged", r.converged},
                    {"objective_value", r.objective_value},
                    {"errors", errors}});
  }
  return {{"methods", methods}, {"rows", rows}, {"non_converged", nonconv}, {"replicates", reps}};
}

inline Json to_json(const StudySpec& s) {
  Json methods = Json::array();
  for (Method m : s.methods) methods.push_back(std::string(to_string(m)));
  Json truth = Json::object();
  for (const auto& [k, v] : s.true_values.empty() ? true_values(s.generator) : s.true_values) truth[k] = v;
  return {{"generator", std::string(to_string(s.generator))},
          {"n", s.n},
          {"reps", s.reps},
          {"methods", methods},
          {"seed", s.seed},
          {"moments", std::string(to_string(s.moments))},
          {"restarts", s.restarts},
          {"optimizer", to_json(s.optimizer)},
          {"true_values", truth}};
}

/// Seed, options and version for one run.
inline Json reproducibility_record(std::uint64_t seed, bool seed_was_chosen, const Json& options) {
  return {{"program", "polysem"},
          {"version", kVersion},
          {"seed", seed},
          {"seed_source", seed_was_chosen ? "random" : "user"},
          {"noise_convention", "N(m, s) draws with standard deviation s"},
          {"options", options}};
}

}  // namespace polysem
