#include "harmitr/evaluation.hpp"

#include "harmitr/error.hpp"
#include "harmitr/parallel.hpp"
#include "harmitr/rng.hpp"

#include <algorithm>
#include <cmath>

namespace harmitr {

TruthMetrics truth_metrics(const Decisions& decision, const ObservationTable& table) {
  if (!table.potential_outcomes)
    throw Error("realized harm and reward need simulated potential outcomes");
  const auto& po = *table.potential_outcomes;
  const std::size_t n = table.n_rows();
  if (decision.size() != n) throw DimensionError("decision length differs from table rows");
  if (n == 0) throw DimensionError("empty table");

  double harm = 0.0;
  double reward = 0.0;
  double treated = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int pi = decision[i];
    if (pi && po.y1[i] - po.y0[i] < 0) harm += 1.0;
    reward += pi ? po.y1[i] : po.y0[i];
    treated += pi;
  }
  const auto N = static_cast<double>(n);
  return {harm / N, reward / N, treated / N};
}

PluginMetrics plugin_metrics(const Decisions& decision, const NuisanceSurface& nuisance) {
  const std::size_t n = nuisance.n_rows();
  if (decision.size() != n) throw DimensionError("decision length differs from nuisance rows");
  if (n == 0) throw DimensionError("empty nuisance surface");
  PluginMetrics m;
  for (std::size_t i = 0; i < n; ++i) {
    const double mu0 = nuisance.mu0[i];
    const double mu1 = nuisance.mu1[i];
    if (!decision[i]) {
      m.reward_model += mu0;
      continue;
    }
    m.reward_model += mu1;
    m.proportion_treated += 1.0;
    const double independent = mu0 * (1.0 - mu1);
    m.thr1 += std::min(mu0, 1.0 - mu1);
    m.thr2 += independent;
    m.thr3 += std::max(independent - 0.1 * std::sqrt(mu0 * mu1 * (1.0 - mu0) * (1.0 - mu1)), 0.0);
  }
  const auto N = static_cast<double>(n);
  m.reward_model /= N;
  m.thr1 /= N;
  m.thr2 /= N;
  m.thr3 /= N;
  m.proportion_treated /= N;
  return m;
}

double expected_utility_discrete(const Decisions& decision, const OraclePopulation& pop,
                                 double beta) {
  if (!(beta >= 0.0)) throw DomainError("beta must be non-negative");
  if (decision.size() != pop.strata.size())
    throw DimensionError("decision length differs from the number of strata");
  double u = 0.0;
  for (std::size_t j = 0; j < decision.size(); ++j)
    if (decision[j]) u += pop.strata[j].mass * (pop.strata[j].tau - beta * pop.strata[j].thr);
  return u;
}

namespace {

MetricVector metrics_for(const ObservationTable& table, const Decisions& decision,
                         const NuisanceSurface& eval) {
  const auto plug = plugin_metrics(decision, eval);
  MetricVector mv;
  mv.reward_model = plug.reward_model;
  mv.thr1 = plug.thr1;
  mv.thr2 = plug.thr2;
  mv.thr3 = plug.thr3;
  mv.proportion_treated = plug.proportion_treated;
  if (table.potential_outcomes) {
    const auto truth = truth_metrics(decision, table);
    mv.reward_empirical = truth.reward;
    mv.harm_empirical = truth.harm;
  }
  return mv;
}

}  // namespace

PipelineResult run_pipeline(const ObservationTable& table, const PipelineConfig& config) {
  const auto nuisance = fit_nuisance_crossfit(table, config.K, config.nuisance);
  const auto sol = run_method(config.method, table, nuisance, config.lambda, config.cost);
  PipelineResult r;
  r.decision = sol.decision;
  r.beta_hat = sol.beta_hat;
  if (config.K == 1) {
    r.metrics = metrics_for(table, r.decision, nuisance);
  } else {
    r.metrics = metrics_for(table, r.decision, fit_nuisance_crossfit(table, 1, config.nuisance));
  }
  return r;
}

MetricVector evaluate_decisions(const ObservationTable& table, const Decisions& decision,
                                const NuisanceOptions& options) {
  if (decision.size() != table.n_rows())
    throw DimensionError("decision column has " + std::to_string(decision.size()) +
                         " rows, data has " + std::to_string(table.n_rows()));
  return metrics_for(table, decision, fit_nuisance_crossfit(table, 1, options));
}

ConfidenceInterval percentile_interval(std::vector<double> values, double level) {
  if (values.empty()) throw DomainError("percentile interval of an empty sample");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  const double tail = (1.0 - level) / 2.0;
  auto rank = [&](double q) {
    // 1e-9 absorbs representation error, e.g. 0.025 * 1000 = 25.000000000000004.
    const auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    return std::clamp<std::size_t>(k, 1, values.size());
  };
  return {values[rank(tail) - 1], values[rank(1.0 - tail) - 1]};
}

BootstrapResult bootstrap_cis(const ObservationTable& table, const PipelineConfig& config,
                              std::size_t B, std::uint64_t seed, double level, unsigned workers) {
  if (B < 2) throw DomainError("bootstrap needs at least 2 replicates");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  const std::size_t n = table.n_rows();
  if (n == 0) throw DimensionError("empty table");

  BootstrapResult result;
  result.replicates.resize(B);
  std::vector<std::size_t> redraws(B, 0);
  std::vector<char> failed(B, 0);

  parallel_for(B, workers, [&](std::size_t b) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > B) {
        failed[b] = 1;
        return;
      }
      const std::uint64_t stream = derive_seed(seed, b, attempt);
      Rng rng(stream);
      std::vector<std::size_t> index(n);
      for (auto& i : index) i = static_cast<std::size_t>(rng.below(n));
      const auto sample = table.subset(index);
      if (!has_both_arms(sample.treatment)) {
        ++redraws[b];
        continue;
      }
      auto cfg = config;
      cfg.nuisance.seed = derive_seed(stream, 1);
      try {
        result.replicates[b] = run_pipeline(sample, cfg).metrics;
        return;
      } catch (const FitError&) {
      } catch (const FoldError&) {
      }
      ++redraws[b];
    }
  });

  for (std::size_t b = 0; b < B; ++b) result.redraws += redraws[b];
  if (result.redraws > B || std::find(failed.begin(), failed.end(), 1) != failed.end())
    throw Error("bootstrap: " + std::to_string(result.redraws) +
                " resamples had to be redrawn (more than B = " + std::to_string(B) + ")");

  auto collect = [&](auto getter) {
    std::vector<double> v(B);
    for (std::size_t b = 0; b < B; ++b) v[b] = getter(result.replicates[b]);
    return percentile_interval(std::move(v), level);
  };
  result.ci["reward_model"] = collect([](const MetricVector& m) { return m.reward_model; });
  result.ci["thr1"] = collect([](const MetricVector& m) { return m.thr1; });
  result.ci["thr2"] = collect([](const MetricVector& m) { return m.thr2; });
  result.ci["thr3"] = collect([](const MetricVector& m) { return m.thr3; });
  result.ci["proportion_treated"] =
      collect([](const MetricVector& m) { return m.proportion_treated; });
  if (table.potential_outcomes) {
    result.ci["reward_empirical"] =
        collect([](const MetricVector& m) { return m.reward_empirical.value_or(0.0); });
    result.ci["harm_empirical"] =
        collect([](const MetricVector& m) { return m.harm_empirical.value_or(0.0); });
  }
  return result;
}

EvaluationReport make_report(const PipelineResult& point, const PipelineConfig& config,
                             const BootstrapResult* boot, double level, std::size_t B) {
  EvaluationReport r;
  r.method = config.method.label();
  r.lambda = config.lambda;
  r.reward_empirical = point.metrics.reward_empirical;
  r.reward_model = point.metrics.reward_model;
  r.thr1 = point.metrics.thr1;
  r.thr2 = point.metrics.thr2;
  r.thr3 = point.metrics.thr3;
  r.harm_empirical = point.metrics.harm_empirical;
  r.proportion_treated = point.metrics.proportion_treated;
  r.beta_hat = point.beta_hat;
  if (boot) {
    r.ci = boot->ci;
    r.ci_level = level;
    r.bootstrap_replicates = B;
    r.bootstrap_redraws = boot->redraws;
  }
  return r;
}

}  // namespace harmitr
