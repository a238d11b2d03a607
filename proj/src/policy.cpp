#include "harmitr/policy.hpp"

#include "harmitr/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace harmitr {
namespace {

void check_lengths(std::span<const double> tau, std::span<const double> thr,
                   std::span<const double> weights) {
  if (tau.size() != thr.size() || tau.size() != weights.size())
    throw DimensionError("tau, harm bound and weight lists must have equal length");
}

std::string short_real(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double parse_parameter(const std::string& text, const std::string& method) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw ConfigError("bad parameter '" + text + "' for method '" + method + "'");
  return v;
}

}  // namespace

double psi_moment(double beta, std::span<const double> tau, std::span<const double> thr_upper,
                  std::span<const double> weights) {
  if (!(beta >= 0.0)) throw DomainError("beta must be non-negative");
  check_lengths(tau, thr_upper, weights);
  double sum = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i)
    if (tau[i] - beta * thr_upper[i] > 0.0) sum += weights[i] * thr_upper[i];
  return sum;
}

std::vector<double> beta_candidates(std::span<const double> tau,
                                    std::span<const double> thr_upper) {
  std::vector<double> c{0.0};
  for (std::size_t i = 0; i < tau.size(); ++i)
    if (tau[i] > 0.0 && thr_upper[i] > 0.0) {
      // The rounded ratio can leave tau - beta * thr a hair above zero; move to
      // the first double where the strict indicator actually switches off.
      double r = tau[i] / thr_upper[i];
      while (tau[i] - r * thr_upper[i] > 0.0) r = std::nextafter(r, INFINITY);
      c.push_back(r);
    }
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

double solve_beta(std::span<const double> tau, std::span<const double> thr_upper,
                  std::span<const double> weights, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("harm budget lambda must be non-negative");
  check_lengths(tau, thr_upper, weights);
  auto psi = [&](double beta) { return psi_moment(beta, tau, thr_upper, weights); };
  if (psi(0.0) <= lambda) return 0.0;

  // Psi is a non-increasing step function that only changes at the candidates,
  // so the infimum is the first candidate where it drops to lambda or below.
  const auto c = beta_candidates(tau, thr_upper);
  // At the largest one only harmless rows remain treated, so psi is 0 there.
  std::size_t lo = 0;  // psi(c[lo]) > lambda
  std::size_t hi = c.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (psi(c[mid]) <= lambda ? hi : lo) = mid;
  }
  return c[hi];
}

HarmBoundSpec Method::bound_spec() const {
  switch (kind) {
    case Kind::conservative:
      return HarmBoundSpec::quantile_truncated(alpha);
    case Kind::expert:
      return HarmBoundSpec::expert_rho(rho_lower);
    default:
      return HarmBoundSpec::frechet_hoeffding();
  }
}

std::string Method::label() const {
  switch (kind) {
    case Kind::cate:
      return "cate";
    case Kind::naive:
      return "naive";
    case Kind::pessimistic:
      return "pessimistic";
    case Kind::conservative:
      return "conservative(" + short_real(alpha) + ")";
    case Kind::expert:
      return "expert(" + short_real(rho_lower) + ")";
  }
  return "";
}

Method Method::parse(const std::string& text, double default_alpha, double default_rho_lower) {
  std::string name = text;
  std::string param;
  if (const auto open = text.find('('); open != std::string::npos) {
    if (text.back() != ')') throw ConfigError("malformed method '" + text + "'");
    name = text.substr(0, open);
    param = text.substr(open + 1, text.size() - open - 2);
  } else if (const auto colon = text.find(':'); colon != std::string::npos) {
    name = text.substr(0, colon);
    param = text.substr(colon + 1);
  }

  Method m;
  m.alpha = default_alpha;
  m.rho_lower = default_rho_lower;
  if (name == "cate") {
    m.kind = Kind::cate;
  } else if (name == "naive") {
    m.kind = Kind::naive;
  } else if (name == "pessimistic") {
    m.kind = Kind::pessimistic;
  } else if (name == "conservative") {
    m.kind = Kind::conservative;
    if (!param.empty()) m.alpha = parse_parameter(param, text);
  } else if (name == "expert") {
    m.kind = Kind::expert;
    if (!param.empty()) m.rho_lower = parse_parameter(param, text);
  } else {
    throw ConfigError("unknown method '" + text +
                      "' (expected cate, naive, pessimistic, conservative, expert)");
  }
  if (!param.empty() && m.kind != Kind::conservative && m.kind != Kind::expert)
    throw ConfigError("method '" + name + "' takes no parameter");
  if (m.kind == Kind::conservative && !(m.alpha > 0.0 && m.alpha < 1.0))
    throw ConfigError("alpha must lie in (0, 1)");
  if (m.kind == Kind::expert && !(m.rho_lower >= -1.0 && m.rho_lower <= 1.0))
    throw ConfigError("rho lower bound must lie in [-1, 1]");
  return m;
}

PolicySolution solve_policy(const NuisanceSurface& nuisance, double lambda,
                            const HarmBoundSpec& spec, double cost) {
  if (!(cost >= 0.0)) throw DomainError("treatment cost must be non-negative");
  PolicySolution sol;
  sol.lambda = lambda;
  sol.spec = spec;
  sol.method = spec.label();
  sol.cost = cost;
  sol.nuisance = nuisance;
  sol.bounds = build_bound_surface(nuisance, spec);

  const std::size_t n = nuisance.n_rows();
  const std::size_t K = std::max<std::size_t>(1, nuisance.K);
  sol.decision.assign(n, 0);
  sol.utility.assign(n, 0.0);
  for (std::size_t k = 1; k <= K; ++k) {
    const auto rows = nuisance.fold_rows(static_cast<int>(k));
    std::vector<double> tau(rows.size());
    std::vector<double> thr(rows.size());
    const std::vector<double> weights(rows.size(), 1.0 / static_cast<double>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      tau[r] = nuisance.tau[rows[r]] - cost;
      thr[r] = sol.bounds.thr_upper[rows[r]];
    }
    const double beta = solve_beta(tau, thr, weights, lambda);
    sol.beta_hat.push_back(beta);
    sol.plugin_harm.push_back(psi_moment(beta, tau, thr, weights));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const double u = tau[r] - beta * thr[r];
      sol.utility[rows[r]] = u;
      sol.decision[rows[r]] = u > 0.0 ? 1 : 0;
    }
  }
  return sol;
}

PolicySolution fit_policy(const ObservationTable& table, double lambda, const HarmBoundSpec& spec,
                          std::size_t K, double cost, std::uint64_t seed,
                          const NuisanceOptions& options) {
  spec.validate();
  if (!(lambda >= 0.0)) throw DomainError("harm budget lambda must be non-negative");
  auto opts = options;
  opts.seed = seed;
  return solve_policy(fit_nuisance_crossfit(table, K, opts), lambda, spec, cost);
}

AppliedPolicy apply_policy(const ObservationTable& train, const Eigen::MatrixXd& test_covariates,
                           double lambda, const HarmBoundSpec& spec, double cost,
                           const NuisanceOptions& options) {
  spec.validate();
  if (test_covariates.rows() == 0) throw DimensionError("test set is empty");
  if (test_covariates.cols() != train.covariates.cols())
    throw DimensionError("test covariates have " + std::to_string(test_covariates.cols()) +
                         " columns, training data " + std::to_string(train.covariates.cols()));
  if (!has_both_arms(train.treatment))
    throw FoldError("both treatment arms must be present to fit nuisances");

  std::vector<std::size_t> all(train.n_rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto fits = fit_arm_pair(train, all, options.probit);
  const auto test = predict_nuisance(fits, test_covariates, options.p_clip);

  std::vector<double> thr;
  if (spec.kind == HarmBoundSpec::Kind::quantile_truncated) {
    // The truncation level comes from the training rows, as in the in-sample fit.
    const auto fitted = predict_nuisance(fits, train.covariates, options.p_clip);
    std::vector<double> train_upper(train.n_rows());
    for (std::size_t i = 0; i < train.n_rows(); ++i)
      train_upper[i] = fh_bounds(fitted.mu0[i], fitted.mu1[i]).upper;
    const double level = upper_quantile(std::move(train_upper), spec.alpha);
    const auto fh = build_bound_surface(test, HarmBoundSpec::frechet_hoeffding());
    thr.resize(test.n_rows());
    for (std::size_t i = 0; i < thr.size(); ++i)
      thr[i] = std::max(std::min(fh.thr_upper[i], level), fh.thr_lower[i]);
  } else {
    thr = build_bound_surface(test, spec).thr_upper;
  }

  std::vector<double> tau(test.n_rows());
  for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = test.tau[i] - cost;
  const std::vector<double> weights(tau.size(), 1.0 / static_cast<double>(tau.size()));

  AppliedPolicy out;
  out.beta_hat = solve_beta(tau, thr, weights, lambda);
  out.decision.resize(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i)
    out.decision[i] = tau[i] - out.beta_hat * thr[i] > 0.0 ? 1 : 0;
  return out;
}

Decisions cate_policy(const NuisanceSurface& nuisance, double cost) {
  Decisions d(nuisance.n_rows());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = nuisance.tau[i] - cost > 0.0 ? 1 : 0;
  return d;
}

Decisions naive_policy(const ObservationTable& table) { return table.treatment; }

PolicySolution run_method(const Method& method, const ObservationTable& table,
                          const NuisanceSurface& nuisance, double lambda, double cost) {
  if (method.constrained()) {
    auto sol = solve_policy(nuisance, lambda, method.bound_spec(), cost);
    sol.method = method.label();
    return sol;
  }
  PolicySolution sol;
  sol.lambda = lambda;
  sol.method = method.label();
  sol.cost = cost;
  sol.nuisance = nuisance;
  sol.decision = method.kind == Method::Kind::cate ? cate_policy(nuisance, cost)
                                                   : naive_policy(table);
  return sol;
}

// ---------------------------------------------------------------------------

void OraclePopulation::validate(double tol) const {
  if (strata.empty()) throw DomainError("population has no strata");
  double total = 0.0;
  for (std::size_t j = 0; j < strata.size(); ++j) {
    const auto& s = strata[j];
    const std::string where = " in stratum " + std::to_string(j + 1);
    if (!(s.mass >= 0.0)) throw DomainError("negative mass" + where);
    const double mu1 = s.mu0 + s.tau;
    if (!(s.mu0 >= 0.0 && s.mu0 <= 1.0 && mu1 >= -tol && mu1 <= 1.0 + tol))
      throw DomainError("outcome probabilities outside [0, 1]" + where);
    if (std::abs(s.tau - (s.tbr - s.thr)) > tol)
      throw DomainError("tau differs from benefit rate minus harm rate" + where);
    if (s.thr < -tol || s.thr > std::min(s.mu0, 1.0 - mu1) + tol)
      throw DomainError("harm rate outside its feasible range" + where);
    total += s.mass;
  }
  if (std::abs(total - 1.0) > tol) throw DomainError("stratum masses do not sum to one");
}

double OraclePopulation::expected_y0() const {
  double e = 0.0;
  for (const auto& s : strata) e += s.mass * s.mu0;
  return e;
}

double discrete_harm(const OraclePopulation& pop, const Decisions& decision) {
  double h = 0.0;
  for (std::size_t j = 0; j < pop.strata.size(); ++j)
    if (decision[j]) h += pop.strata[j].mass * pop.strata[j].thr;
  return h;
}

double discrete_gain(const OraclePopulation& pop, const Decisions& decision) {
  double g = 0.0;
  for (std::size_t j = 0; j < pop.strata.size(); ++j)
    if (decision[j]) g += pop.strata[j].mass * pop.strata[j].tau;
  return g;
}

DiscretePolicy oracle_policy_discrete(const OraclePopulation& pop, double lambda) {
  const std::size_t m = pop.strata.size();
  std::vector<double> mass(m);
  std::vector<double> tau(m);
  std::vector<double> thr(m);
  for (std::size_t j = 0; j < m; ++j) {
    mass[j] = pop.strata[j].mass;
    tau[j] = pop.strata[j].tau;
    thr[j] = pop.strata[j].thr;
  }
  DiscretePolicy p;
  p.beta = solve_beta(tau, thr, mass, lambda);
  p.decision.resize(m);
  for (std::size_t j = 0; j < m; ++j) p.decision[j] = tau[j] - p.beta * thr[j] > 0.0 ? 1 : 0;
  p.harm = discrete_harm(pop, p.decision);
  p.reward_gain = discrete_gain(pop, p.decision);
  return p;
}

DiscretePolicy brute_force_policy_discrete(const OraclePopulation& pop, double lambda) {
  const std::size_t m = pop.strata.size();
  if (m > 20) throw SizeError("brute force is limited to 20 strata");
  DiscretePolicy best;
  bool found = false;
  int best_count = 0;
  Decisions d(m);
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    for (std::size_t j = 0; j < m; ++j) d[j] = (mask >> j) & 1u;
    const double harm = discrete_harm(pop, d);
    if (harm > lambda) continue;
    const double gain = discrete_gain(pop, d);
    const int count = std::popcount(mask);
    bool better = !found || gain > best.reward_gain;
    if (found && gain == best.reward_gain) {
      // Ties: fewer treated strata, then lexicographically smallest decision vector.
      better = count < best_count || (count == best_count && d < best.decision);
    }
    if (better) {
      found = true;
      best.decision = d;
      best.reward_gain = gain;
      best.harm = harm;
      best_count = count;
    }
  }
  return best;
}

MinHarmPolicy min_harm_policy_discrete(const OraclePopulation& pop, double reward_target) {
  const std::size_t m = pop.strata.size();
  const double ey0 = pop.expected_y0();
  MinHarmPolicy out;
  out.decision.assign(m, 0);
  if (reward_target <= ey0) {
    out.reward = ey0;
    return out;
  }

  Decisions all_positive(m);
  for (std::size_t j = 0; j < m; ++j) all_positive[j] = pop.strata[j].tau > 0.0 ? 1 : 0;
  const double max_reward = ey0 + discrete_gain(pop, all_positive);
  if (reward_target > max_reward)
    throw InfeasibleError("no policy reaches reward " + short_real(reward_target) +
                          "; the maximum is " + short_real(max_reward));

  // Stratum j enters 1{beta tau - thr > 0} as soon as beta exceeds thr/tau, so
  // "just above" candidate c the treated set is {tau > 0, thr/tau <= c}.
  std::vector<double> ratio(m, INFINITY);
  std::vector<double> candidates{0.0};
  for (std::size_t j = 0; j < m; ++j) {
    if (pop.strata[j].tau > 0.0) {
      ratio[j] = pop.strata[j].thr / pop.strata[j].tau;
      candidates.push_back(ratio[j]);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  for (double c : candidates) {
    Decisions d(m);
    for (std::size_t j = 0; j < m; ++j) d[j] = ratio[j] <= c ? 1 : 0;
    const double reward = ey0 + discrete_gain(pop, d);
    if (reward >= reward_target) {
      out.beta = c;
      out.decision = std::move(d);
      out.reward = reward;
      out.harm = discrete_harm(pop, out.decision);
      return out;
    }
  }
  // Unreachable: the last candidate treats every tau > 0 stratum.
  throw InfeasibleError("no policy reaches the reward target");
}

}  // namespace harmitr
