#include "harmitr/cli.hpp"

#include "harmitr/error.hpp"
#include "harmitr/evaluation.hpp"
#include "harmitr/parallel.hpp"
#include "harmitr/policy.hpp"
#include "harmitr/simulation.hpp"
#include "harmitr/tabular_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <optional>
#include <ostream>

namespace harmitr {
namespace {

using Json = nlohmann::ordered_json;

struct RunConfig {
  std::string command;
  std::string data;
  std::string out;
  std::string decisions;
  double lambda = 0.05;
  std::string method = "pessimistic";
  double alpha = 0.10;
  double rho_lower = 0.0;
  long long folds = 1;
  double cost = 0.0;
  long long bootstrap = 1000;
  double level = 0.95;
  std::uint64_t seed = 20250101;
  long long workers = static_cast<long long>(default_workers());
  double delta = 0.0;
  long long n = 1000;
  long long reps = 200;
  std::vector<std::string> methods;
};

// Command-line values; unset ones fall back to the config file, then defaults.
struct Flags {
  std::optional<std::string> config, data, out, decisions, method;
  std::optional<double> lambda, alpha, rho_lower, cost, level, delta;
  std::optional<long long> folds, bootstrap, workers, n, reps;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> methods;
};

template <typename T>
void take(const Json& j, const char* key, T& target, std::vector<std::string>& problems) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    problems.push_back(std::string("config key '") + key + "' has the wrong type");
  }
}

void load_config_file(const std::string& path, RunConfig& cfg,
                      std::vector<std::string>& problems) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");

  static const std::vector<std::string> known = {
      "command", "data",  "out",     "decisions", "lambda", "method", "alpha",
      "rho_lower", "folds", "cost",  "bootstrap", "level",  "seed",   "workers",
      "delta",   "n",     "reps",    "methods"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      problems.push_back("unknown config key '" + key + "'");
  }
  take(j, "data", cfg.data, problems);
  take(j, "out", cfg.out, problems);
  take(j, "decisions", cfg.decisions, problems);
  take(j, "lambda", cfg.lambda, problems);
  take(j, "method", cfg.method, problems);
  take(j, "alpha", cfg.alpha, problems);
  take(j, "rho_lower", cfg.rho_lower, problems);
  take(j, "folds", cfg.folds, problems);
  take(j, "cost", cfg.cost, problems);
  take(j, "bootstrap", cfg.bootstrap, problems);
  take(j, "level", cfg.level, problems);
  take(j, "seed", cfg.seed, problems);
  take(j, "workers", cfg.workers, problems);
  take(j, "delta", cfg.delta, problems);
  take(j, "n", cfg.n, problems);
  take(j, "reps", cfg.reps, problems);
  take(j, "methods", cfg.methods, problems);
}

template <typename T>
void overlay(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

void validate(const RunConfig& c, std::vector<std::string>& problems) {
  const bool uses_data = c.command != "simulate";
  if (uses_data && c.data.empty()) problems.push_back("--data is required for " + c.command);
  if (c.out.empty()) problems.push_back("--out is required");
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) problems.push_back("lambda must lie in [0, 1]");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) problems.push_back("alpha must lie in (0, 1)");
  if (!(c.rho_lower >= -1.0 && c.rho_lower <= 1.0))
    problems.push_back("rho-lower must lie in [-1, 1]");
  if (c.folds < 1) problems.push_back("folds must be >= 1");
  if (!(c.cost >= 0.0)) problems.push_back("cost must be >= 0");
  if (c.bootstrap < 2) problems.push_back("bootstrap must be >= 2");
  if (!(c.level > 0.0 && c.level < 1.0)) problems.push_back("level must lie in (0, 1)");
  if (c.workers < 1) problems.push_back("workers must be >= 1");
  if (c.command == "simulate") {
    if (!(c.delta >= 0.0)) problems.push_back("delta must be >= 0");
    if (c.n < 10) problems.push_back("n must be >= 10");
    if (c.reps < 1) problems.push_back("reps must be >= 1");
    if (c.folds > c.n) problems.push_back("folds must not exceed n");
    for (const auto& m : c.methods) {
      try {
        Method::parse(m, c.alpha, c.rho_lower);
      } catch (const ConfigError& e) {
        problems.push_back(e.what());
      }
    }
  } else {
    try {
      Method::parse(c.method, c.alpha, c.rho_lower);
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }
}

std::filesystem::path sibling(const std::filesystem::path& out, const std::string& suffix) {
  auto p = out;
  p.replace_filename(out.stem().string() + suffix);
  return p;
}

Json real(double v) { return std::isfinite(v) ? Json(round12(v)) : Json(nullptr); }

PipelineConfig pipeline_config(const RunConfig& c) {
  PipelineConfig p;
  p.method = Method::parse(c.method, c.alpha, c.rho_lower);
  p.lambda = c.lambda;
  p.K = static_cast<std::size_t>(c.folds);
  p.cost = c.cost;
  p.nuisance.seed = c.seed;
  return p;
}

int cmd_simulate(const RunConfig& c, std::ostream& err) {
  SimulationConfig sim;
  sim.delta = c.delta;
  sim.n = static_cast<std::size_t>(c.n);
  sim.lambda = c.lambda;
  sim.replications = static_cast<std::size_t>(c.reps);
  sim.K = static_cast<std::size_t>(c.folds);
  sim.seed = c.seed;
  sim.alpha = c.alpha;
  sim.cost = c.cost;
  for (const auto& m : c.methods) sim.methods.push_back(Method::parse(m, c.alpha, c.rho_lower));

  err << "simulate: delta=" << c.delta << " n=" << c.n << " lambda=" << c.lambda
      << " reps=" << c.reps << " folds=" << c.folds << " workers=" << c.workers << '\n';
  const auto result = run_study(sim, static_cast<unsigned>(c.workers));
  const std::filesystem::path out = c.out;
  write_report(result.summary, out, format_for(out));
  const auto long_csv = sibling(out, "_replicates.csv");
  write_replicates_csv(result, long_csv);
  for (const auto& m : result.summary.methods)
    err << "  " << m.method << ": harm " << format_real(m.harm_mean) << ", reward "
        << format_real(m.reward_mean) << " (" << m.failures << " failed)\n";
  err << "wrote " << out.string() << " and " << long_csv.string() << '\n';
  return 0;
}

int cmd_fit(const RunConfig& c, std::ostream& err) {
  const auto table = load_observations(c.data);
  const auto cfg = pipeline_config(c);
  const auto nuisance = fit_nuisance_crossfit(table, cfg.K, cfg.nuisance);
  const auto sol = run_method(cfg.method, table, nuisance, cfg.lambda, cfg.cost);

  const std::filesystem::path out = c.out;
  const auto decisions_path = sibling(out, "_decisions.csv");
  write_decisions(sol.decision, decisions_path);

  double treated = 0.0;
  for (int d : sol.decision) treated += d;
  Json j;
  j["method"] = sol.method;
  j["bound"] = cfg.method.constrained() ? Json(sol.spec.label()) : Json(nullptr);
  j["lambda"] = real(cfg.lambda);
  j["cost"] = real(cfg.cost);
  j["folds"] = cfg.K;
  j["seed"] = c.seed;
  j["n_rows"] = table.n_rows();
  Json betas = Json::array();
  for (double b : sol.beta_hat) betas.push_back(real(b));
  j["beta_hat"] = betas;
  Json psi = Json::array();
  for (double p : sol.plugin_harm) psi.push_back(real(p));
  j["plugin_harm"] = psi;
  j["proportion_treated"] = real(treated / static_cast<double>(table.n_rows()));
  j["decisions"] = decisions_path.filename().string();
  write_text(out, j.dump(2) + "\n");
  err << "fit: " << sol.method << " treats " << treated << " of " << table.n_rows()
      << " rows; wrote " << out.string() << " and " << decisions_path.string() << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& c, std::ostream& err) {
  const auto table = load_observations(c.data);
  const auto cfg = pipeline_config(c);
  EvaluationReport report;
  if (!c.decisions.empty()) {
    const auto decision = load_decisions(c.decisions);
    PipelineResult point;
    point.metrics = evaluate_decisions(table, decision, cfg.nuisance);
    report = make_report(point, cfg);
    report.method = "audit:" + std::filesystem::path(c.decisions).filename().string();
  } else {
    report = make_report(run_pipeline(table, cfg), cfg);
  }
  const std::filesystem::path out = c.out;
  write_report(report, out, format_for(out));
  err << "evaluate: wrote " << out.string() << '\n';
  return 0;
}

int cmd_bootstrap(const RunConfig& c, std::ostream& err) {
  const auto table = load_observations(c.data);
  const auto cfg = pipeline_config(c);
  const auto point = run_pipeline(table, cfg);
  const auto B = static_cast<std::size_t>(c.bootstrap);
  err << "bootstrap: " << B << " replicates on " << c.workers << " workers\n";
  const auto boot = bootstrap_cis(table, cfg, B, c.seed, c.level, static_cast<unsigned>(c.workers));
  const auto report = make_report(point, cfg, &boot, c.level, B);
  const std::filesystem::path out = c.out;
  write_report(report, out, format_for(out));
  err << "bootstrap: " << boot.redraws << " resamples redrawn; wrote " << out.string() << '\n';
  return 0;
}

std::string kind_of(const Error& e) {
  if (dynamic_cast<const SchemaError*>(&e)) return "schema";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ConsistencyError*>(&e)) return "consistency";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const FitError*>(&e)) return "fit";
  if (dynamic_cast<const FoldError*>(&e)) return "fold";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  return "runtime";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Harm-constrained individualized treatment rules", "harmitr"};
  RunConfig cfg;
  Flags f;
  app.add_option("command", cfg.command, "simulate | fit | evaluate | bootstrap")
      ->required()
      ->check(CLI::IsMember({"simulate", "fit", "evaluate", "bootstrap"}));
  app.add_option("--config", f.config, "JSON file with any of the options below");
  app.add_option("--data", f.data, "input CSV (columns y, a, x1..xd[, y0, y1])");
  app.add_option("--out", f.out, "output file (.json or .csv)");
  app.add_option("--decisions", f.decisions, "evaluate a precomputed decision column");
  app.add_option("--lambda", f.lambda, "harm-rate budget");
  app.add_option("--method", f.method,
                 "cate | naive | pessimistic | conservative | expert");
  app.add_option("--methods", f.methods, "methods compared by simulate");
  app.add_option("--alpha", f.alpha, "quantile level of the conservative method");
  app.add_option("--rho-lower", f.rho_lower, "correlation floor of the expert method");
  app.add_option("--folds", f.folds, "cross-fitting folds K");
  app.add_option("--cost", f.cost, "treatment cost subtracted from the CATE");
  app.add_option("--bootstrap", f.bootstrap, "bootstrap replicates B");
  app.add_option("--level", f.level, "confidence level");
  app.add_option("--seed", f.seed, "master seed");
  app.add_option("--workers", f.workers, "parallel workers (default: all cores)");
  app.add_option("--delta", f.delta, "simulation: confounding strength");
  app.add_option("--n", f.n, "simulation: sample size");
  app.add_option("--reps", f.reps, "simulation: replications");

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    std::vector<std::string> problems;
    if (f.config) load_config_file(*f.config, cfg, problems);
    overlay(f.data, cfg.data);
    overlay(f.out, cfg.out);
    overlay(f.decisions, cfg.decisions);
    overlay(f.lambda, cfg.lambda);
    overlay(f.method, cfg.method);
    overlay(f.alpha, cfg.alpha);
    overlay(f.rho_lower, cfg.rho_lower);
    overlay(f.folds, cfg.folds);
    overlay(f.cost, cfg.cost);
    overlay(f.bootstrap, cfg.bootstrap);
    overlay(f.level, cfg.level);
    overlay(f.seed, cfg.seed);
    overlay(f.workers, cfg.workers);
    overlay(f.delta, cfg.delta);
    overlay(f.n, cfg.n);
    overlay(f.reps, cfg.reps);
    if (!f.methods.empty()) cfg.methods = f.methods;
    validate(cfg, problems);
    if (!problems.empty()) {
      err << "error: config: " << problems.size() << " problem(s)\n";
      for (const auto& p : problems) err << "  - " << p << '\n';
      return 2;
    }

    if (cfg.command == "simulate") return cmd_simulate(cfg, err);
    if (cfg.command == "fit") return cmd_fit(cfg, err);
    if (cfg.command == "evaluate") return cmd_evaluate(cfg, err);
    return cmd_bootstrap(cfg, err);
  } catch (const Error& e) {
    err << "error: " << kind_of(e) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace harmitr
