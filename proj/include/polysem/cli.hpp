#pragma once

// Command-line front end. run_cli is the whole program minus main(), so the
// tests can drive it with captured streams.
//
// Exit codes: 0 success, 1 input error, 2 fit did not converge.

#include "polysem/dsl.hpp"
#include "polysem/empirical.hpp"
#include "polysem/estimate.hpp"
#include "polysem/io.hpp"
#include "polysem/simulate.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace polysem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNotConverged = 2;

enum class Format { text, json };

struct RunConfig {
  std::string subcommand;
  std::string model_path;
  std::string data_path;
  std::string method = "uls3";
  std::string methods = "uls,uls3,gls,wls";
  std::string moments;  // empty: the subcommand's default
  std::string generator = "ganzach";
  std::uint32_t order = 2;
  std::optional<std::uint64_t> seed;
  std::size_t reps = 20;
  std::size_t n = 1000;
  int restarts = 4;
  int max_iterations = 500;
  unsigned threads = 1;
  bool no_warm_start = false;
  std::string header = "auto";
  std::string format = "text";
  std::string output_path;
  std::string json_path;
};

namespace detail {

/// Thrown for anything the user can fix; mapped to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Seed {
  std::uint64_t value = 0;
  bool chosen = false;
};

inline Seed resolve_seed(const RunConfig& c, std::ostream& err) {
  if (c.seed) return {*c.seed, false};
  std::random_device rd;
  const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  err << "seed: " << s << " (chosen at random; pass --seed " << s << " to repeat this run)\n";
  return {s, true};
}

/// Output sink: the named file, or `out` when no path was given.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
      stream_ = &fallback;
      return;
    }
    file_.open(path);
    if (!file_) throw InputError("cannot open output file '" + path + "'");
    stream_ = &file_;
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_ = nullptr;
};

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot open output file '" + path + "'");
  f << j.dump(2) << "\n";
}

/// Text form of the record, as comment lines.
inline std::string record_comment(const Json& record) {
  std::string s;
  std::istringstream lines(record.dump(2));
  for (std::string line; std::getline(lines, line);) s += "# " + line + "\n";
  return s;
}

inline Format parse_format(const std::string& s) {
  if (s == "text") return Format::text;
  if (s == "json") return Format::json;
  throw InputError("unknown output format '" + s + "' (expected text or json)");
}

inline SemModel load_model_or_throw(const std::string& path) {
  if (path.empty()) throw InputError("--model is required");
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file '" + path + "'");
  try {
    return parse_model(in);
  } catch (const ModelError& e) {
    throw InputError(path + ":" + std::to_string(e.line()) + ":" + std::to_string(e.column()) + ": " + e.message());
  } catch (const std::runtime_error& e) {
    throw InputError(e.what());
  }
}

inline MomentDefinition moment_definition(const RunConfig& c, MomentDefinition fallback) {
  if (c.moments.empty()) return fallback;
  try {
    return parse_moment_definition(c.moments);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

inline std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    try {
      out.push_back(parse_method(item));
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  }
  if (out.empty()) throw InputError("--methods lists no method");
  return out;
}

inline OptimizerOptions optimizer_options(const RunConfig& c) {
  OptimizerOptions o;
  o.max_iterations = c.max_iterations;
  return o;
}

inline int cmd_fit(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Format format = parse_format(c.format);
  const SemModel model = load_model_or_throw(c.model_path);
  if (c.data_path.empty()) throw InputError("--data is required");
  Method method{};
  try {
    method = parse_method(c.method);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const MomentDefinition def = moment_definition(c, MomentDefinition::central);

  CsvOptions csv;
  csv.columns = model.manifest_names();
  csv.header = c.header == "yes" ? CsvHeader::present : c.header == "no" ? CsvHeader::absent : CsvHeader::auto_detect;
  Dataset data;
  try {
    data = prepare_data(load_csv(c.data_path, csv), def);
  } catch (const DataError& e) {
    throw InputError(e.what());
  }
  if (data.n() < 2) throw InputError(c.data_path + ": need at least 2 cases");

  const Seed seed = resolve_seed(c, err);
  const std::uint32_t order = required_order(method);
  PipelineOptions po;
  po.optimizer = optimizer_options(c);
  po.restarts = c.restarts;
  po.seed = seed.value;
  po.warm_start = !c.no_warm_start;
  po.threads = c.threads;

  PipelineResult res;
  try {
    const auto moments = std::make_shared<const CompiledMoments>(model, order, def, c.threads);
    const EmpiricalMoments empirical = compute_moments(data, order);
    res = fit_pipeline(moments, data, empirical, method, po);
  } catch (const DataError& e) {
    throw InputError(e.what());
  } catch (const PipelineError& e) {
    throw InputError(e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  const Json options = {{"command", "fit"},
                        {"model", c.model_path},
                        {"data", c.data_path},
                        {"method", std::string(to_string(method))},
                        {"moments", std::string(to_string(def))},
                        {"n", data.n()},
                        {"restarts", po.restarts},
                        {"warm_start", po.warm_start},
                        {"optimizer", to_json(po.optimizer)}};
  const Json record = reproducibility_record(seed.value, seed.chosen, options);
  Sink sink(c.output_path, out);
  if (format == Format::json) {
    sink.get() << Json{{"record", record}, {"result", to_json(res.fit)}}.dump(2) << "\n";
  } else {
    std::ostream& o = sink.get();
    o << record_comment(record);
    std::size_t width = 9;
    for (const auto& name : res.fit.names) width = std::max(width, name.size());
    for (std::size_t i = 0; i < res.fit.names.size(); ++i)
      o << res.fit.names[i] << std::string(width - res.fit.names[i].size() + 2, ' ') << format_number(res.fit.theta[i])
        << "\n";
    o << "objective" << std::string(width - 9 + 2, ' ') << format_number(res.fit.objective_value) << "\n";
    o << "converged  " << (res.fit.converged ? "yes" : "no") << " (" << to_string(res.fit.reason) << ", "
      << res.fit.iterations << " iterations, gradient norm " << format_number(res.fit.gradient_norm) << ", start "
      << res.fit.start_point_id << ")\n";
  }
  if (!res.fit.converged) {
    err << "fit did not converge (" << to_string(res.fit.reason) << ")\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

inline int cmd_moments(const RunConfig& c, std::ostream& out, std::ostream& /*err*/) {
  const Format format = parse_format(c.format);
  if (c.order < 2) throw InputError("--order must be at least 2");
  const SemModel model = load_model_or_throw(c.model_path);
  const MomentDefinition def = moment_definition(c, MomentDefinition::central);
  MomentEngine engine(model);
  const auto tensor = engine.implied_cov_tensor(c.order, def, c.threads);
  const auto names = model.manifest_names();
  const auto namer = model.namer();

  const Json options = {{"command", "moments"},
                        {"model", c.model_path},
                        {"order", c.order},
                        {"moments", std::string(to_string(def))}};
  Json record = reproducibility_record(0, false, options);
  record["seed"] = nullptr;
  record.erase("seed_source");
  Sink sink(c.output_path, out);
  if (format == Format::json) {
    Json j = tensor_to_json(tensor, names, [&](const Polynomial& p) { return p.to_string(namer); });
    sink.get() << Json{{"record", record}, {"tensor", j}}.dump(2) << "\n";
    return kExitOk;
  }
  std::ostream& o = sink.get();
  o << record_comment(record);
  const auto tuples = tensor.tuples();
  for (std::size_t t = 0; t < tuples.size(); ++t) {
    o << "(";
    for (std::size_t i = 0; i < tuples[t].size(); ++i) o << (i ? "," : "") << names[tuples[t][i]];
    o << ") = " << tensor.entries()[t].to_string(namer) << "\n";
  }
  return kExitOk;
}

inline int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Generator g{};
  try {
    g = parse_generator(c.generator);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  if (c.n < 1) throw InputError("--n must be at least 1");
  const Seed seed = resolve_seed(c, err);
  const Dataset d = generate(g, c.n, seed.value);
  const Json options = {{"command", "simulate"}, {"generator", std::string(to_string(g))}, {"n", c.n}};
  const Json record = reproducibility_record(seed.value, seed.chosen, options);
  Sink sink(c.output_path, out);
  write_csv(d, sink.get());
  if (c.output_path.empty()) err << record.dump() << "\n";
  else write_json_file(c.output_path + ".record.json", record);
  return kExitOk;
}

inline int cmd_replicate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Format format = parse_format(c.format);
  StudySpec spec;
  try {
    spec.generator = parse_generator(c.generator);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  spec.n = c.n;
  spec.reps = c.reps;
  if (spec.reps < 1) throw InputError("--reps must be at least 1");
  if (spec.n < 10) throw InputError("--n must be at least 10");
  spec.methods = parse_methods(c.methods);
  spec.moments = moment_definition(c, MomentDefinition::raw_minus_mean_product);
  spec.restarts = c.restarts;
  spec.optimizer = optimizer_options(c);
  spec.threads = c.threads;
  const Seed seed = resolve_seed(c, err);
  spec.seed = seed.value;

  const BiasTable table = run_study(spec);
  Json options = to_json(spec);
  options["command"] = "replicate";
  const Json record = reproducibility_record(seed.value, seed.chosen, options);
  const Json full = {{"record", record}, {"table", to_json(table)}};
  if (!c.json_path.empty()) write_json_file(c.json_path, full);
  Sink sink(c.output_path, out);
  if (format == Format::json) {
    sink.get() << full.dump(2) << "\n";
  } else {
    sink.get() << record_comment(record) << format_bias_table(table);
  }
  return kExitOk;
}

inline int cmd_validate(const RunConfig& c, std::ostream& out, std::ostream& /*err*/) {
  const SemModel model = load_model_or_throw(c.model_path);
  const auto space = free_parameters(model);
  out << c.model_path << ": ok\n";
  out << "  latent: " << model.k() << " exogenous, " << model.l() << " endogenous\n";
  out << "  manifest: " << model.m1() << " x, " << model.m2() << " y\n";
  out << "  free parameters: " << space.size() << "\n";
  for (const auto& w : model.warnings) out << "  warning: " << w << "\n";
  return kExitOk;
}

}  // namespace detail

/// Parses argv and runs one subcommand.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig c;
  CLI::App app{"Polynomial structural equation models fitted by implied moments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::map<std::string, std::string> formats;
  auto add_format = [&](CLI::App* s, const std::string& fallback) {
    std::string& slot = formats[s->get_name()];
    slot = fallback;
    s->add_option("--format", slot, "text or json (default " + fallback + ")");
    s->add_option("--out", c.output_path, "write results here instead of standard output");
  };

  auto* fit = app.add_subcommand("fit", "fit a model to a CSV dataset");
  fit->add_option("--model", c.model_path, "model file")->required();
  fit->add_option("--data", c.data_path, "CSV file, one column per manifest variable")->required();
  fit->add_option("--method", c.method, "uls, uls3, gls or wls (default uls3)");
  fit->add_option("--moments", c.moments, "central (default; data are centered) or raw");
  fit->add_option("--restarts", c.restarts, "random ULS restarts besides the default start")->check(CLI::NonNegativeNumber);
  fit->add_option("--seed", c.seed, "seed for the restarts");
  fit->add_option("--max-iterations", c.max_iterations, "optimizer iteration cap")->check(CLI::PositiveNumber);
  fit->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  fit->add_flag("--no-warm-start", c.no_warm_start, "start stage 2 from the default start, not the ULS estimate");
  fit->add_option("--header", c.header, "auto, yes or no")->check(CLI::IsMember({"auto", "yes", "no"}));

  auto* moments = app.add_subcommand("moments", "print the symbolic implied moment tensor");
  moments->add_option("--model", c.model_path, "model file")->required();
  moments->add_option("--order", c.order, "tensor order, at least 2 (default 2)");
  moments->add_option("--moments", c.moments, "central (default) or raw");
  moments->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "write one generated dataset as CSV");
  simulate->add_option("--generator", c.generator, "ganzach or interaction")->required();
  simulate->add_option("--n", c.n, "number of cases (default 1000)");
  simulate->add_option("--seed", c.seed, "generator seed");
  simulate->add_option("--out", c.output_path, "CSV path (default standard output)");

  auto* replicate = app.add_subcommand("replicate", "run a bias study and print the bias table");
  replicate->add_option("--generator", c.generator, "ganzach or interaction")->required();
  replicate->add_option("--reps", c.reps, "replications (default 20)");
  replicate->add_option("--n", c.n, "cases per replication (default 1000)");
  replicate->add_option("--methods", c.methods, "comma-separated methods (default uls,uls3,gls,wls)");
  replicate->add_option("--moments", c.moments, "raw (default) or central");
  replicate->add_option("--restarts", c.restarts, "random ULS restarts per fit")->check(CLI::NonNegativeNumber);
  replicate->add_option("--seed", c.seed, "study seed");
  replicate->add_option("--max-iterations", c.max_iterations, "optimizer iteration cap")->check(CLI::PositiveNumber);
  replicate->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  replicate->add_option("--json", c.json_path, "also write the table as JSON here");

  auto* validate = app.add_subcommand("validate", "check a model file and report diagnostics");
  validate->add_option("model", c.model_path, "model file")->required();

  add_format(fit, "json");
  add_format(moments, "text");
  add_format(replicate, "text");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  for (auto* s : app.get_subcommands()) c.subcommand = s->get_name();
  if (auto it = formats.find(c.subcommand); it != formats.end()) c.format = it->second;

  try {
    if (c.subcommand == "fit") return detail::cmd_fit(c, out, err);
    if (c.subcommand == "moments") return detail::cmd_moments(c, out, err);
    if (c.subcommand == "simulate") return detail::cmd_simulate(c, out, err);
    if (c.subcommand == "replicate") return detail::cmd_replicate(c, out, err);
    if (c.subcommand == "validate") return detail::cmd_validate(c, out, err);
  } catch (const detail::InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  err << "error: unknown subcommand\n";
  return kExitInput;
}

}  // namespace polysem::cli
