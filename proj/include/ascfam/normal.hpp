#pragma once

// Univariate and bivariate standard normal distribution functions.

namespace ascfam::normal {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double pdf(double z);
double log_pdf(double z);

/// Standard normal CDF, accurate in both tails.
double cdf(double z);

/// log Phi(z), finite for any finite z.
double log_cdf(double z);

/// log(Phi(hi) - Phi(lo)) for lo < hi; either bound may be infinite.
double log_cdf_interval(double lo, double hi);

/// Inverse standard normal CDF (Wichura AS241), relative accuracy ~1e-16.
double quantile(double p);

/// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.
double bivariate_cdf(double h, double k, double rho);

/// P(X > h, Y > k) for a standard bivariate normal with correlation rho.
double bivariate_upper(double h, double k, double rho);

}  // namespace ascfam::normal
