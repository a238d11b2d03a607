#include "harmitr/probit.hpp"

#include "harmitr/error.hpp"
#include "harmitr/normal.hpp"
#include "harmitr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace harmitr {
namespace {

// [1, X] design with the intercept column first.
Eigen::MatrixXd design(const Eigen::MatrixXd& covariates) {
  Eigen::MatrixXd z(covariates.rows(), covariates.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(covariates.cols()) = covariates;
  return z;
}

void check_response(const Eigen::MatrixXd& z, std::span<const int> response) {
  if (static_cast<std::size_t>(z.rows()) != response.size())
    throw DimensionError("probit: covariate rows and response length differ");
}

double objective(const Eigen::VectorXd& b, const Eigen::MatrixXd& z, std::span<const int> y,
                 double ridge) {
  const Eigen::VectorXd eta = z * b;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    ll += y[static_cast<std::size_t>(i)] ? normal::log_cdf(eta(i)) : normal::log_cdf(-eta(i));
  return ll - 0.5 * ridge * b.squaredNorm();
}

struct Derivatives {
  double objective;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd neg_hessian;
};

Derivatives derivatives(const Eigen::VectorXd& b, const Eigen::MatrixXd& z,
                        std::span<const int> y, double ridge) {
  const Eigen::VectorXd eta = z * b;
  Eigen::VectorXd score(eta.size());
  Eigen::VectorXd weight(eta.size());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // Signed index q = (2y - 1) eta; d/d(eta) log Phi(q) = sign * mills(q).
    const double sign = y[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
    const double q = sign * eta(i);
    const double m = normal::mills(q);
    ll += normal::log_cdf(q);
    score(i) = sign * m;
    weight(i) = m * (q + m);
  }
  Derivatives d;
  d.objective = ll - 0.5 * ridge * b.squaredNorm();
  d.gradient = z.transpose() * score - ridge * b;
  d.neg_hessian = z.transpose() * weight.asDiagonal() * z;
  d.neg_hessian.diagonal().array() += ridge;
  return d;
}

double unpenalized_loglik(const Eigen::VectorXd& b, const Eigen::MatrixXd& z,
                          std::span<const int> y) {
  return objective(b, z, y, 0.0);
}

}  // namespace

LogLikGrad probit_loglik_grad(const Eigen::VectorXd& coefficients,
                              const Eigen::MatrixXd& covariates, std::span<const int> response,
                              double ridge) {
  if (coefficients.size() != covariates.cols() + 1)
    throw DimensionError("probit: expected " + std::to_string(covariates.cols() + 1) +
                         " coefficients");
  const Eigen::MatrixXd z = design(covariates);
  check_response(z, response);
  auto d = derivatives(coefficients, z, response, ridge);
  return {d.objective, std::move(d.gradient)};
}

ProbitFit fit_probit(const Eigen::MatrixXd& covariates, std::span<const int> response,
                     const ProbitOptions& options) {
  const Eigen::MatrixXd z = design(covariates);
  check_response(z, response);
  const auto n = static_cast<double>(z.rows());
  const Eigen::Index p = z.cols();
  if (z.rows() < p)
    throw FitError("probit: " + std::to_string(z.rows()) + " rows cannot determine " +
                       std::to_string(p) + " coefficients",
                   FitError::Kind::underdetermined);

  const double ybar =
      static_cast<double>(std::accumulate(response.begin(), response.end(), 0)) / n;
  if ((ybar == 0.0 || ybar == 1.0) && options.ridge <= 0.0)
    throw FitError("probit: perfect separation (constant response); raise ridge",
                   FitError::Kind::separation);

  ProbitFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(p);
  fit.coefficients(0) = normal::quantile(std::clamp(ybar, 1e-3, 1.0 - 1e-3));

  auto d = derivatives(fit.coefficients, z, response, options.ridge);
  fit.objective_trace.push_back(d.objective);
  fit.final_gradient_norm = d.gradient.lpNorm<Eigen::Infinity>() / n;

  while (fit.final_gradient_norm > options.tolerance && fit.iterations < options.max_iterations) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(d.neg_hessian);
    Eigen::VectorXd step = ldlt.solve(d.gradient);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      // Information matrix numerically singular: fall back to a scaled gradient step.
      step = d.gradient / std::max(1.0, d.neg_hessian.diagonal().maxCoeff());
    }

    // Near the optimum a Newton step moves the sum by less than its rounding
    // error; a strict ascent test would then halve the step to nothing.
    const double slack = 1e-12 * (1.0 + std::abs(d.objective));
    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    for (int halving = 0; halving < 60; ++halving, scale *= 0.5) {
      trial = fit.coefficients + scale * step;
      const double obj = objective(trial, z, response, options.ridge);
      if (std::isfinite(obj) && obj >= d.objective - slack) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++fit.iterations;
    fit.coefficients = trial;
    d = derivatives(fit.coefficients, z, response, options.ridge);
    fit.objective_trace.push_back(d.objective);
    fit.final_gradient_norm = d.gradient.lpNorm<Eigen::Infinity>() / n;
  }
  fit.converged = fit.final_gradient_norm <= options.tolerance;

  if (options.ridge == 0.0 && fit.coefficients.lpNorm<Eigen::Infinity>() > 1.0) {
    // Without a penalty, a finite maximizer is unique; if stretching the
    // coefficients does not lower the likelihood they lie on a recession
    // direction and the data are separated.
    const double here = unpenalized_loglik(fit.coefficients, z, response);
    const double stretched = unpenalized_loglik(2.0 * fit.coefficients, z, response);
    if (stretched >= here)
      throw FitError("probit: perfect separation, the likelihood has no finite maximizer; "
                     "raise ridge",
                     FitError::Kind::separation);
  }
  if (!fit.converged)
    throw FitError("probit: no convergence after " + std::to_string(fit.iterations) +
                       " iterations (gradient norm " + std::to_string(fit.final_gradient_norm) +
                       ")",
                   FitError::Kind::non_convergence);
  if (!fit.coefficients.allFinite())
    throw FitError("probit: non-finite coefficients", FitError::Kind::non_convergence);
  return fit;
}

double probit_predict(const ProbitFit& fit, std::span<const double> x, double p_clip) {
  if (!(p_clip >= 0.0 && p_clip < 0.5)) throw DomainError("p_clip must lie in [0, 0.5)");
  if (static_cast<Eigen::Index>(x.size()) + 1 != fit.coefficients.size())
    throw DimensionError("probit_predict: expected " +
                         std::to_string(fit.coefficients.size() - 1) + " covariates, got " +
                         std::to_string(x.size()));
  double eta = fit.coefficients(0);
  for (std::size_t j = 0; j < x.size(); ++j)
    eta += fit.coefficients(static_cast<Eigen::Index>(j) + 1) * x[j];
  return std::clamp(normal::cdf(eta), p_clip, 1.0 - p_clip);
}

std::vector<std::size_t> NuisanceSurface::fold_rows(int k) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < fold_id.size(); ++i)
    if (fold_id[i] == k) rows.push_back(i);
  return rows;
}

std::vector<int> assign_folds(std::size_t n, std::size_t K, std::uint64_t seed) {
  if (K < 1) throw FoldError("number of folds must be at least 1");
  if (K > n) throw FoldError("number of folds exceeds the number of rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x666f6c64ULL));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  std::vector<int> fold(n);
  const std::size_t base = n / K;
  const std::size_t extra = n % K;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t size = base + (k < extra ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j) fold[order[pos++]] = static_cast<int>(k + 1);
  }
  return fold;
}

NuisanceSurface::FitPair fit_arm_pair(const ObservationTable& table,
                                      const std::vector<std::size_t>& train,
                                      const ProbitOptions& options) {
  std::vector<std::size_t> arm_rows[2];
  for (std::size_t i : train) arm_rows[table.treatment[i] ? 1 : 0].push_back(i);
  ProbitFit fits[2];
  for (int a = 0; a < 2; ++a) {
    const auto& rows = arm_rows[a];
    if (rows.empty()) throw FoldError("training rows contain no units with a = " + std::to_string(a));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), table.covariates.cols());
    std::vector<int> y(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = table.covariates.row(static_cast<Eigen::Index>(rows[r]));
      y[r] = table.outcome[rows[r]];
    }
    fits[a] = fit_probit(x, y, options);
  }
  return {std::move(fits[0]), std::move(fits[1])};
}

NuisanceSurface predict_nuisance(const NuisanceSurface::FitPair& fits,
                                 const Eigen::MatrixXd& covariates, double p_clip) {
  NuisanceSurface s;
  const auto n = static_cast<std::size_t>(covariates.rows());
  s.mu0.resize(n);
  s.mu1.resize(n);
  s.tau.resize(n);
  s.fold_id.assign(n, 1);
  std::vector<double> x(static_cast<std::size_t>(covariates.cols()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    s.mu0[i] = probit_predict(fits.control, x, p_clip);
    s.mu1[i] = probit_predict(fits.treated, x, p_clip);
    s.tau[i] = s.mu1[i] - s.mu0[i];
  }
  s.fits.push_back(fits);
  return s;
}

NuisanceSurface fit_nuisance_crossfit(const ObservationTable& table, std::size_t K,
                                      const NuisanceOptions& options) {
  const std::size_t n = table.n_rows();
  if (K == 1) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (!has_both_arms(table.treatment))
      throw FoldError("both treatment arms must be present to fit nuisances");
    return predict_nuisance(fit_arm_pair(table, all, options.probit), table.covariates,
                            options.p_clip);
  }

  NuisanceSurface s;
  s.K = K;
  s.fold_id = assign_folds(n, K, options.seed);
  s.mu0.resize(n);
  s.mu1.resize(n);
  s.tau.resize(n);
  std::vector<double> x(table.dim());
  for (std::size_t k = 1; k <= K; ++k) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held;
    for (std::size_t i = 0; i < n; ++i)
      (s.fold_id[i] == static_cast<int>(k) ? held : train).push_back(i);
    bool arms[2] = {false, false};
    for (std::size_t i : train) arms[table.treatment[i]] = true;
    if (!arms[0] || !arms[1])
      throw FoldError("the complement of fold " + std::to_string(k) +
                      " lacks a treatment arm; use fewer folds");
    auto pair = fit_arm_pair(table, train, options.probit);
    for (std::size_t i : held) {
      for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = table.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      s.mu0[i] = probit_predict(pair.control, x, options.p_clip);
      s.mu1[i] = probit_predict(pair.treated, x, options.p_clip);
      s.tau[i] = s.mu1[i] - s.mu0[i];
    }
    s.fits.push_back(std::move(pair));
  }
  return s;
}

}  // namespace harmitr
