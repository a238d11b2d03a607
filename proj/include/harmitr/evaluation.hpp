#pragma once

#include "harmitr/policy.hpp"
#include "harmitr/tabular_io.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace harmitr {

struct TruthMetrics {
  double harm = 0.0;
  double reward = 0.0;
  double proportion_treated = 0.0;
};

/// Realized harm, reward and treated share against simulated potential outcomes.
TruthMetrics truth_metrics(const Decisions& decision, const ObservationTable& table);

struct PluginMetrics {
  double reward_model = 0.0;
  double thr1 = 0.0;  // Frechet-Hoeffding bound
  double thr2 = 0.0;  // rho >= 0
  double thr3 = 0.0;  // rho >= 0.1
  double proportion_treated = 0.0;
};

PluginMetrics plugin_metrics(const Decisions& decision, const NuisanceSurface& nuisance);

struct MetricVector {
  std::optional<double> reward_empirical;
  double reward_model = 0.0;
  double thr1 = 0.0;
  double thr2 = 0.0;
  double thr3 = 0.0;
  std::optional<double> harm_empirical;
  double proportion_treated = 0.0;
};

/// sum mass * decision * (tau - beta * thr).
double expected_utility_discrete(const Decisions& decision, const OraclePopulation& pop,
                                 double beta);

struct PipelineConfig {
  Method method;
  double lambda = 0.05;
  std::size_t K = 1;
  double cost = 0.0;
  NuisanceOptions nuisance;
};

struct PipelineResult {
  MetricVector metrics;
  std::vector<double> beta_hat;
  Decisions decision;
};

/// Fits the policy and evaluates it with plug-in nuisances fitted on the whole
/// table (and realized outcomes when the table is simulated).
PipelineResult run_pipeline(const ObservationTable& table, const PipelineConfig& config);

/// Evaluates fixed decisions (audit mode).
MetricVector evaluate_decisions(const ObservationTable& table, const Decisions& decision,
                                const NuisanceOptions& options = {});

struct BootstrapResult {
  std::vector<MetricVector> replicates;  // by replicate index
  std::map<std::string, ConfidenceInterval> ci;
  std::size_t redraws = 0;
};

/// Nearest-rank percentile interval: order statistics ceil(q n) for
/// q = (1 - level)/2 and 1 - (1 - level)/2.
ConfidenceInterval percentile_interval(std::vector<double> values, double level);

/// Percentile bootstrap: every data-dependent step is rerun on each resample.
BootstrapResult bootstrap_cis(const ObservationTable& table, const PipelineConfig& config,
                              std::size_t B, std::uint64_t seed, double level = 0.95,
                              unsigned workers = 1);

/// Full-sample point estimates plus bootstrap intervals in report form.
EvaluationReport make_report(const PipelineResult& point, const PipelineConfig& config,
                             const BootstrapResult* boot = nullptr, double level = 0.95,
                             std::size_t B = 0);

}  // namespace harmitr
