#include "harmitr/simulation.hpp"

#include "harmitr/error.hpp"
#include "harmitr/evaluation.hpp"
#include "harmitr/normal.hpp"
#include "harmitr/parallel.hpp"
#include "harmitr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace harmitr {

std::vector<Method> SimulationConfig::default_methods(double alpha) {
  std::vector<Method> m(5);
  m[0].kind = Method::Kind::cate;
  m[1].kind = Method::Kind::pessimistic;
  m[2].kind = Method::Kind::conservative;
  m[2].alpha = alpha;
  m[3].kind = Method::Kind::expert;
  m[3].rho_lower = 0.0;
  m[4].kind = Method::Kind::expert;
  m[4].rho_lower = 0.1;
  return m;
}

void SimulationConfig::validate() const {
  std::vector<std::string> problems;
  if (!(delta >= 0.0)) problems.push_back("delta must be >= 0");
  if (n < 10) problems.push_back("n must be >= 10");
  if (!(lambda >= 0.0 && lambda <= 1.0)) problems.push_back("lambda must lie in [0, 1]");
  if (replications < 1) problems.push_back("replications must be >= 1");
  if (K < 1) problems.push_back("folds must be >= 1");
  if (K > n) problems.push_back("folds must not exceed n");
  if (!(alpha > 0.0 && alpha < 1.0)) problems.push_back("alpha must lie in (0, 1)");
  if (!(cost >= 0.0)) problems.push_back("cost must be >= 0");
  if (!problems.empty()) {
    std::string msg = "invalid simulation config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

ObservationTable generate_dataset(const SimulationConfig& config, std::size_t replicate_index) {
  const std::size_t n = config.n;
  Rng rng(derive_seed(config.seed, replicate_index));
  ObservationTable t;
  t.covariates.resize(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i)
    for (Eigen::Index j = 0; j < 3; ++j) t.covariates(i, j) = rng.normal();

  t.treatment.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = t.covariates.row(static_cast<Eigen::Index>(i));
    t.treatment[i] = rng.bernoulli(normal::cdf((r(0) - r(1) + r(2)) / 3.0)) ? 1 : 0;
  }
  std::vector<double> u(n);
  for (auto& v : u) v = rng.normal();

  PotentialOutcomes po;
  po.y0.resize(n);
  po.y1.resize(n);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = t.covariates.row(static_cast<Eigen::Index>(i)).sum() / 3.0;
  for (std::size_t i = 0; i < n; ++i)
    po.y0[i] = rng.bernoulli(normal::cdf(s[i] + config.delta * u[i])) ? 1 : 0;
  for (std::size_t i = 0; i < n; ++i)
    po.y1[i] = rng.bernoulli(normal::cdf(s[i] + config.delta * u[i] / 2.0 +
                                         config.treatment_effect_shift))
                   ? 1
                   : 0;

  t.outcome.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.outcome[i] = t.treatment[i] ? po.y1[i] : po.y0[i];
  t.potential_outcomes = std::move(po);
  return t;
}

double true_mu(const SimulationConfig& config, std::span<const double> x, int arm) {
  if (x.size() != 3) throw DimensionError("the simulation design has 3 covariates");
  const double s = (x[0] + x[1] + x[2]) / 3.0;
  if (arm == 0) return normal::cdf(s / std::sqrt(1.0 + config.delta * config.delta));
  return normal::cdf((s + config.treatment_effect_shift) /
                     std::sqrt(1.0 + config.delta * config.delta / 4.0));
}

namespace {

double nearest_rank(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

struct Moments {
  double mean = 0, sd = 0, q1 = 0, median = 0, q3 = 0;
};

Moments describe(std::vector<double> v) {
  Moments m;
  if (v.empty()) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  std::sort(v.begin(), v.end());
  m.q1 = nearest_rank(v, 0.25);
  m.median = nearest_rank(v, 0.5);
  m.q3 = nearest_rank(v, 0.75);
  return m;
}

}  // namespace

StudyResult run_study(const SimulationConfig& config, unsigned workers) {
  config.validate();
  const auto methods = config.methods.empty() ? SimulationConfig::default_methods(config.alpha)
                                              : config.methods;
  const std::size_t R = config.replications;
  const std::size_t M = methods.size();

  StudyResult result;
  result.records.resize(R * M);

  parallel_for(R, workers, [&](std::size_t r) {
    const auto data = generate_dataset(config, r);
    NuisanceOptions opts;
    opts.probit = config.probit;
    opts.seed = derive_seed(config.seed, r, 1);
    std::optional<NuisanceSurface> nuisance;
    try {
      nuisance = fit_nuisance_crossfit(data, config.K, opts);
    } catch (const Error&) {
    }
    for (std::size_t m = 0; m < M; ++m) {
      auto& rec = result.records[r * M + m];
      rec.replicate = r;
      rec.method = methods[m].label();
      if (!nuisance) {
        rec.failed = true;
        continue;
      }
      try {
        const auto sol = run_method(methods[m], data, *nuisance, config.lambda, config.cost);
        const auto truth = truth_metrics(sol.decision, data);
        rec.harm = truth.harm;
        rec.reward = truth.reward;
        rec.proportion_treated = truth.proportion_treated;
        rec.beta_hat = sol.beta_hat;
        for (double psi : sol.plugin_harm) {
          rec.plugin_harm = std::max(rec.plugin_harm, psi);
          rec.plugin_ok = rec.plugin_ok && psi <= config.lambda;
        }
      } catch (const Error&) {
        rec.failed = true;
      }
    }
  });

  auto& s = result.summary;
  s.delta = config.delta;
  s.n = config.n;
  s.lambda = config.lambda;
  s.K = config.K;
  s.replications = R;
  s.seed = config.seed;
  for (std::size_t m = 0; m < M; ++m) {
    MethodSummary ms;
    ms.method = methods[m].label();
    std::vector<double> harm;
    std::vector<double> reward;
    double treated = 0.0;
    double plugin = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& rec = result.records[r * M + m];
      if (rec.failed) {
        ++ms.failures;
        continue;
      }
      harm.push_back(rec.harm);
      reward.push_back(rec.reward);
      treated += rec.proportion_treated;
      plugin += rec.plugin_harm;
      if (!rec.plugin_ok) ++ms.plugin_violations;
    }
    ms.replicates = harm.size();
    if (static_cast<double>(ms.failures) > 0.05 * static_cast<double>(R))
      throw Error("simulation: method " + ms.method + " failed in " +
                  std::to_string(ms.failures) + " of " + std::to_string(R) + " replicates");
    const auto h = describe(harm);
    const auto w = describe(reward);
    ms.harm_mean = h.mean;
    ms.harm_sd = h.sd;
    ms.harm_q1 = h.q1;
    ms.harm_median = h.median;
    ms.harm_q3 = h.q3;
    ms.reward_mean = w.mean;
    ms.reward_sd = w.sd;
    ms.reward_q1 = w.q1;
    ms.reward_median = w.median;
    ms.reward_q3 = w.q3;
    if (ms.replicates > 0) {
      ms.proportion_treated_mean = treated / static_cast<double>(ms.replicates);
      ms.plugin_harm_mean = plugin / static_cast<double>(ms.replicates);
    }
    s.methods.push_back(ms);
  }
  return result;
}

void write_replicates_csv(const StudyResult& result, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "method,replicate,harm,reward\n";
  for (const auto& rec : result.records) {
    if (rec.failed) continue;
    os << rec.method << ',' << rec.replicate << ',' << format_real(rec.harm) << ','
       << format_real(rec.reward) << '\n';
  }
  write_text(path, os.str());
}

}  // namespace harmitr
