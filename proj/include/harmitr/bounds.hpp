#pragma once

#include "harmitr/probit.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace harmitr {

/// Which upper bound on the conditional harm rate the constraint uses.
struct HarmBoundSpec {
  enum class Kind { frechet_hoeffding, quantile_truncated, expert_rho };
  Kind kind = Kind::frechet_hoeffding;
  double alpha = 0.10;      // quantile_truncated only
  double rho_lower = 0.0;   // expert_rho only
  /// Optional per-row correlation floor overriding rho_lower (library use only).
  std::optional<std::vector<double>> rho_lower_per_row;

  static HarmBoundSpec frechet_hoeffding();
  static HarmBoundSpec quantile_truncated(double alpha);
  static HarmBoundSpec expert_rho(double rho_lower);

  /// Throws DomainError for alpha outside (0,1) or rho_lower outside [-1,1].
  void validate() const;
  std::string label() const;
};

struct ThrBounds {
  double lower;
  double upper;
};

struct RhoRange {
  double lower;
  double upper;
};

/// Sharp bounds on P(Y(0)=1, Y(1)=0 | x) from the two margins.
ThrBounds fh_bounds(double mu0, double mu1);

/// Identified range of Corr(Y(0), Y(1) | x) given the margins.
RhoRange rho_range(double mu0, double mu1);

/// Harm rate implied by a correlation value inside rho_range.
double thr_from_rho(double mu0, double mu1, double rho);

/// Sharp upper bound when the correlation is known to be at least rho_floor.
double expert_upper_bound(double mu0, double mu1, double rho_floor);

/// Nearest-rank (1 - alpha) quantile: order statistic ceil((1 - alpha) n).
double upper_quantile(std::vector<double> values, double alpha);

/// Elementwise min(value, upper_quantile(values, alpha)).
std::vector<double> quantile_truncate(const std::vector<double>& values, double alpha);

struct BoundSurface {
  std::vector<double> thr_lower;
  std::vector<double> thr_upper;
  HarmBoundSpec spec;
  /// Truncation level per fold (1-based index - 1); quantile_truncated only.
  std::vector<double> fold_thresholds;
};

/// Per-row bounds. For quantile truncation the level used for fold k is the
/// quantile of the Frechet-Hoeffding upper bounds over the rows outside fold k
/// (all rows when K = 1).
BoundSurface build_bound_surface(const NuisanceSurface& nuisance, const HarmBoundSpec& spec);

}  // namespace harmitr
