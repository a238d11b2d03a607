#include "harmitr/bounds.hpp"

#include "harmitr/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace harmitr {
namespace {

void check_margins(double mu0, double mu1) {
  if (!(mu0 > 0.0 && mu0 < 1.0) || !(mu1 > 0.0 && mu1 < 1.0))
    throw DomainError("outcome probabilities must lie strictly inside (0, 1)");
}

double margin_scale(double mu0, double mu1) {
  return std::sqrt(mu0 * (1.0 - mu0) * mu1 * (1.0 - mu1));
}

std::string short_real(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

HarmBoundSpec HarmBoundSpec::frechet_hoeffding() { return {}; }

HarmBoundSpec HarmBoundSpec::quantile_truncated(double alpha) {
  HarmBoundSpec s;
  s.kind = Kind::quantile_truncated;
  s.alpha = alpha;
  s.validate();
  return s;
}

HarmBoundSpec HarmBoundSpec::expert_rho(double rho_lower) {
  HarmBoundSpec s;
  s.kind = Kind::expert_rho;
  s.rho_lower = rho_lower;
  s.validate();
  return s;
}

void HarmBoundSpec::validate() const {
  if (kind == Kind::quantile_truncated && !(alpha > 0.0 && alpha < 1.0))
    throw DomainError("alpha must lie in (0, 1)");
  if (kind == Kind::expert_rho) {
    if (!(rho_lower >= -1.0 && rho_lower <= 1.0))
      throw DomainError("rho lower bound must lie in [-1, 1]");
    if (rho_lower_per_row) {
      for (double r : *rho_lower_per_row)
        if (!(r >= -1.0 && r <= 1.0)) throw DomainError("rho lower bound must lie in [-1, 1]");
    }
  }
}

std::string HarmBoundSpec::label() const {
  switch (kind) {
    case Kind::frechet_hoeffding:
      return "frechet_hoeffding";
    case Kind::quantile_truncated:
      return "quantile_truncated(" + short_real(alpha) + ")";
    case Kind::expert_rho:
      return "expert_rho(" + short_real(rho_lower) + ")";
  }
  return "";
}

ThrBounds fh_bounds(double mu0, double mu1) {
  check_margins(mu0, mu1);
  return {std::max(0.0, -(mu1 - mu0)), std::min(mu0, 1.0 - mu1)};
}

RhoRange rho_range(double mu0, double mu1) {
  check_margins(mu0, mu1);
  const double scale = margin_scale(mu0, mu1);
  const double lower = -std::min((1.0 - mu0) * (1.0 - mu1), mu0 * mu1) / scale;
  const double upper = std::min(mu0 * (1.0 - mu1), mu1 * (1.0 - mu0)) / scale;
  // Equal-variance margins give exactly -1 or 1 in theory; keep rounding inside.
  return {std::max(lower, -1.0), std::min(upper, 1.0)};
}

double thr_from_rho(double mu0, double mu1, double rho) {
  const auto range = rho_range(mu0, mu1);
  // Admit rounding slop at the endpoints; anything further out is infeasible.
  constexpr double slack = 1e-12;
  if (!(rho >= range.lower - slack && rho <= range.upper + slack))
    throw DomainError("correlation " + short_real(rho) + " outside its identified range [" +
                      short_real(range.lower) + ", " + short_real(range.upper) + "]");
  return mu0 * (1.0 - mu1) - rho * margin_scale(mu0, mu1);
}

double expert_upper_bound(double mu0, double mu1, double rho_floor) {
  if (!(rho_floor >= -1.0 && rho_floor <= 1.0))
    throw DomainError("rho lower bound must lie in [-1, 1]");
  const auto range = rho_range(mu0, mu1);
  if (rho_floor <= range.lower) return fh_bounds(mu0, mu1).upper;
  return std::max(mu0 * (1.0 - mu1) - rho_floor * margin_scale(mu0, mu1), 0.0);
}

double upper_quantile(std::vector<double> values, double alpha) {
  if (values.empty()) throw DomainError("quantile of an empty list");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  const auto n = static_cast<double>(values.size());
  // ceil((1 - alpha) n) with a guard against 0.9 * 10 = 9.000000000000002.
  auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   values.end());
  return values[rank - 1];
}

std::vector<double> quantile_truncate(const std::vector<double>& values, double alpha) {
  const double level = upper_quantile(values, alpha);
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [level](double v) { return std::min(v, level); });
  return out;
}

BoundSurface build_bound_surface(const NuisanceSurface& nuisance, const HarmBoundSpec& spec) {
  spec.validate();
  const std::size_t n = nuisance.n_rows();
  if (spec.rho_lower_per_row && spec.rho_lower_per_row->size() != n)
    throw DimensionError("per-row rho lower bounds must match the number of rows");

  BoundSurface s;
  s.spec = spec;
  s.thr_lower.resize(n);
  s.thr_upper.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto fh = fh_bounds(nuisance.mu0[i], nuisance.mu1[i]);
    s.thr_lower[i] = fh.lower;
    if (spec.kind == HarmBoundSpec::Kind::expert_rho) {
      const double floor = spec.rho_lower_per_row ? (*spec.rho_lower_per_row)[i] : spec.rho_lower;
      s.thr_upper[i] = expert_upper_bound(nuisance.mu0[i], nuisance.mu1[i], floor);
    } else {
      s.thr_upper[i] = fh.upper;
    }
  }

  if (spec.kind == HarmBoundSpec::Kind::quantile_truncated) {
    const std::size_t K = std::max<std::size_t>(1, nuisance.K);
    const auto fh_upper = s.thr_upper;
    for (std::size_t k = 1; k <= K; ++k) {
      std::vector<double> train;
      for (std::size_t i = 0; i < n; ++i)
        if (K == 1 || nuisance.fold_id[i] != static_cast<int>(k)) train.push_back(fh_upper[i]);
      const double level = upper_quantile(std::move(train), spec.alpha);
      s.fold_thresholds.push_back(level);
      for (std::size_t i = 0; i < n; ++i)
        if (K == 1 || nuisance.fold_id[i] == static_cast<int>(k))
          s.thr_upper[i] = std::min(fh_upper[i], level);
    }
  }

  // Truncation, or a correlation floor above the identified range, can push the
  // upper value below max(0, -tau). Those rows have tau < 0 and are never
  // treated, so lifting them restores lower <= upper without touching any policy.
  for (std::size_t i = 0; i < n; ++i) s.thr_upper[i] = std::max(s.thr_upper[i], s.thr_lower[i]);
  return s;
}

}  // namespace harmitr
