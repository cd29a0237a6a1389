#include "clborrow/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "clborrow/error.hpp"

namespace clborrow::special {

namespace {

const boost::math::normal_distribution<double> kStandardNormal{0.0, 1.0};

}  // namespace

double normal_cdf(double x) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(kStandardNormal, x);
}

double normal_sf(double x) {
  if (std::isinf(x)) return x > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(kStandardNormal, x));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(kStandardNormal, p);
}

double student_t_two_sided(double t, double df) {
  if (std::isnan(t) || !(df > 0.0)) throw DomainError("student_t_two_sided: invalid arguments");
  const double at = std::fabs(t);
  if (std::isinf(at)) return 0.0;
  if (std::isinf(df)) return 2.0 * normal_sf(at);
  const boost::math::students_t_distribution<double> dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, at)));
}

double chi_squared_sf(double x, double df) {
  if (std::isnan(x) || !(df > 0.0)) throw DomainError("chi_squared_sf: invalid arguments");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  // Q(df/2, x/2) directly; avoids the distribution wrapper's overflow policy on tiny tails.
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

double beta_cdf(double x, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("beta_cdf: shape parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::ibeta(a, b, x);
}

double beta_quantile(double p, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("beta_quantile: shape parameters must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("beta_quantile: p must lie in [0, 1]");
  return boost::math::ibeta_inv(a, b, p);
}

double log_beta(double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("log_beta: arguments must be positive");
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace clborrow::special
