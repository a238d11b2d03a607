#pragma once

#include "harmitr/bounds.hpp"
#include "harmitr/probit.hpp"
#include "harmitr/tabular_io.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace harmitr {

/// Psi(beta) = sum_i w_i thr_i 1{tau_i - beta thr_i > 0}.
double psi_moment(double beta, std::span<const double> tau, std::span<const double> thr_upper,
                  std::span<const double> weights);

/// Breakpoints of Psi: 0 and every tau_i / thr_i with both positive (rounded
/// up to where the strict indicator turns off), sorted and deduplicated.
std::vector<double> beta_candidates(std::span<const double> tau,
                                    std::span<const double> thr_upper);

/// inf{beta >= 0 : Psi(beta) <= lambda}, found exactly over the breakpoints.
double solve_beta(std::span<const double> tau, std::span<const double> thr_upper,
                  std::span<const double> weights, double lambda);

/// A policy-learning method: the two baselines or a harm-constrained rule
/// with a particular upper bound.
struct Method {
  enum class Kind { cate, naive, pessimistic, conservative, expert };
  Kind kind = Kind::pessimistic;
  double alpha = 0.10;
  double rho_lower = 0.0;

  bool constrained() const { return kind != Kind::cate && kind != Kind::naive; }
  HarmBoundSpec bound_spec() const;
  /// "cate", "naive", "pessimistic", "conservative(0.1)", "expert(0)".
  std::string label() const;
  /// Accepts the labels above, bare "conservative"/"expert" (using the given
  /// defaults) and the "expert:0.1" form.
  static Method parse(const std::string& text, double default_alpha = 0.10,
                      double default_rho_lower = 0.0);
};

struct PolicySolution {
  double lambda = 0.0;
  HarmBoundSpec spec;
  std::string method;
  double cost = 0.0;
  std::vector<double> beta_hat;      // per fold
  std::vector<double> plugin_harm;   // Psi(beta_hat) per fold
  Decisions decision;
  std::vector<double> utility;       // (tau - c) - beta_fold * thr_upper
  NuisanceSurface nuisance;
  BoundSurface bounds;
};

/// Bounds and decisions of the cross-fitted estimator on precomputed nuisances:
/// beta is solved per fold on that fold's rows.
PolicySolution solve_policy(const NuisanceSurface& nuisance, double lambda,
                            const HarmBoundSpec& spec, double cost = 0.0);

PolicySolution fit_policy(const ObservationTable& table, double lambda, const HarmBoundSpec& spec,
                          std::size_t K, double cost, std::uint64_t seed,
                          const NuisanceOptions& options = {});

struct AppliedPolicy {
  Decisions decision;
  double beta_hat = 0.0;
};

/// Fits on all of `train`, then solves beta on the predicted test rows.
AppliedPolicy apply_policy(const ObservationTable& train, const Eigen::MatrixXd& test_covariates,
                           double lambda, const HarmBoundSpec& spec, double cost = 0.0,
                           const NuisanceOptions& options = {});

/// 1{tau_hat - c > 0}.
Decisions cate_policy(const NuisanceSurface& nuisance, double cost = 0.0);
/// The historical assignment A.
Decisions naive_policy(const ObservationTable& table);

/// Decisions of `method` on a table whose nuisances are already fitted.
/// Baselines return an empty beta list.
PolicySolution run_method(const Method& method, const ObservationTable& table,
                          const NuisanceSurface& nuisance, double lambda, double cost = 0.0);

// ---------------------------------------------------------------------------
// Discrete populations with known harm rates.

struct Stratum {
  double mass;
  double mu0;
  double tau;
  double thr;
  double tbr;
};

struct OraclePopulation {
  std::vector<Stratum> strata;

  /// Masses sum to one, tau = tbr - thr, thr within the margin bounds.
  void validate(double tol = 1e-12) const;
  double expected_y0() const;
};

struct DiscretePolicy {
  double beta = 0.0;
  Decisions decision;
  double reward_gain = 0.0;  // sum mass * tau * decision
  double harm = 0.0;         // sum mass * thr * decision
};

/// Index-order sums shared by every discrete solver so results compare exactly.
double discrete_harm(const OraclePopulation& pop, const Decisions& decision);
double discrete_gain(const OraclePopulation& pop, const Decisions& decision);

/// Threshold rule 1{tau - beta* thr > 0} with beta* the exact multiplier.
DiscretePolicy oracle_policy_discrete(const OraclePopulation& pop, double lambda);

/// Exhaustive search over all 2^K stratum policies (K <= 20).
DiscretePolicy brute_force_policy_discrete(const OraclePopulation& pop, double lambda);

struct MinHarmPolicy {
  double beta = 0.0;
  Decisions decision;
  double harm = 0.0;
  double reward = 0.0;
};

/// Minimizes harm subject to reward >= target. Throws InfeasibleError when
/// the target exceeds E[Y(0)] + sum mass * max(tau, 0).
MinHarmPolicy min_harm_policy_discrete(const OraclePopulation& pop, double reward_target);

}  // namespace harmitr
