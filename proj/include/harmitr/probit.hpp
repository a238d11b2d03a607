#pragma once

#include "harmitr/tabular_io.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace harmitr {

struct ProbitOptions {
  /// Bound on the max-norm of the per-observation average gradient.
  double tolerance = 1e-8;
  int max_iterations = 100;
  double ridge = 1e-8;
};

struct ProbitFit {
  /// Intercept first, then one slope per covariate.
  Eigen::VectorXd coefficients;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  bool converged = false;
  /// Penalized log-likelihood after each accepted Newton step (starting point first).
  std::vector<double> objective_trace;
};

struct LogLikGrad {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
};

/// Penalized probit log-likelihood
///   sum_i [y_i log Phi(eta_i) + (1 - y_i) log Phi(-eta_i)] - ridge/2 |b|^2
/// with eta_i = b0 + x_i' b, and its exact gradient.
LogLikGrad probit_loglik_grad(const Eigen::VectorXd& coefficients,
                              const Eigen::MatrixXd& covariates, std::span<const int> response,
                              double ridge);

/// Newton iterations with step halving. Throws FitError on separation
/// (ridge == 0), non-convergence, or n < d + 1.
ProbitFit fit_probit(const Eigen::MatrixXd& covariates, std::span<const int> response,
                     const ProbitOptions& options = {});

double probit_predict(const ProbitFit& fit, std::span<const double> x, double p_clip = 1e-6);

struct NuisanceOptions {
  ProbitOptions probit;
  double p_clip = 1e-6;
  std::uint64_t seed = 0;
};

/// Cross-fitted conditional outcome means. Row i is predicted by the pair of
/// fits trained on every fold except fold_id[i] (or on all rows when K = 1).
struct NuisanceSurface {
  std::vector<double> mu0;
  std::vector<double> mu1;
  std::vector<double> tau;
  std::vector<int> fold_id;  // 1..K
  std::size_t K = 1;
  struct FitPair {
    ProbitFit control;
    ProbitFit treated;
  };
  std::vector<FitPair> fits;

  std::size_t n_rows() const { return mu0.size(); }
  /// Row indices belonging to fold k (1-based), ascending.
  std::vector<std::size_t> fold_rows(int k) const;
};

/// Seeded shuffle then contiguous blocks; the first n % K folds get one extra
/// row. Returns 1-based fold ids.
std::vector<int> assign_folds(std::size_t n, std::size_t K, std::uint64_t seed);

/// Fits one probit per arm on the rows `train`, returning (control, treated).
NuisanceSurface::FitPair fit_arm_pair(const ObservationTable& table,
                                      const std::vector<std::size_t>& train,
                                      const ProbitOptions& options);

NuisanceSurface fit_nuisance_crossfit(const ObservationTable& table, std::size_t K,
                                      const NuisanceOptions& options = {});

/// Predictions of one fit pair on arbitrary covariate rows.
NuisanceSurface predict_nuisance(const NuisanceSurface::FitPair& fits,
                                 const Eigen::MatrixXd& covariates, double p_clip);

}  // namespace harmitr
