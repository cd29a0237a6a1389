#pragma once

// Distribution functions used throughout the library. All tails are computed
// directly (no 1 - cdf cancellation) so small p-values keep full precision.

namespace clborrow::special {

double normal_cdf(double x);
double normal_sf(double x);
/// Inverse of normal_cdf on (0, 1).
double normal_quantile(double p);

/// Two-sided p-value P(|T_df| >= |t|). df may be non-integer; df = +inf is normal.
double student_t_two_sided(double t, double df);

/// Upper tail P(X > x) of a chi-square with (possibly non-integer) df > 0.
double chi_squared_sf(double x, double df);

/// Regularized incomplete beta I_x(a, b).
double beta_cdf(double x, double a, double b);
/// Inverse of beta_cdf in x.
double beta_quantile(double p, double a, double b);
/// log B(a, b).
double log_beta(double a, double b);

}  // namespace clborrow::special
