#pragma once

namespace harmitr::normal {

/// Standard normal density.
double pdf(double x);

/// Standard normal CDF, accurate to double precision via erfc.
double cdf(double x);

/// log Phi(x), stable for large negative x.
double log_cdf(double x);

/// phi(x) / Phi(x), stable for large negative x.
double mills(double x);

/// Inverse standard normal CDF (rational approximation refined by one
/// Halley step). Requires p in (0, 1).
double quantile(double p);

}  // namespace harmitr::normal
