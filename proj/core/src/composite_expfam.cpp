#include "clborrow/composite_expfam.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "clborrow/error.hpp"
#include "clborrow/special.hpp"

namespace clborrow {

TestResult satterthwaite_test(double w, const Eigen::MatrixXd& h_inv_psi,
                              const Eigen::MatrixXd& g_inv_psi) {
  const auto q = h_inv_psi.rows();
  if (q == 0 || h_inv_psi.cols() != q || g_inv_psi.rows() != q || g_inv_psi.cols() != q)
    throw DomainError("satterthwaite_test: blocks must be square and of equal size");
  if (w < -1e-9) throw NumericalError("satterthwaite_test: negative likelihood-ratio statistic");
  w = std::max(w, 0.0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> h_eig(h_inv_psi);
  if (h_eig.info() != Eigen::Success || h_eig.eigenvalues().minCoeff() <= 0.0)
    throw NumericalError("satterthwaite_test: H^psi block is not positive definite");
  const Eigen::MatrixXd h_half = h_eig.operatorSqrt();
  Eigen::LLT<Eigen::MatrixXd> g_llt(g_inv_psi);
  if (g_llt.info() != Eigen::Success)
    throw NumericalError("satterthwaite_test: G^psi block is not positive definite");
  const Eigen::MatrixXd g_inv_h_half = g_llt.solve(h_half);
  Eigen::MatrixXd sym = h_half * g_inv_h_half;
  sym = 0.5 * (sym + sym.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("satterthwaite_test: eigen solve failed");

  TestResult r;
  r.method = TestMethod::ClrtSatterthwaite;
  r.statistic = w;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Eigen::Index j = 0; j < q; ++j) {
    const double lambda = eig.eigenvalues()(j);
    r.lambdas.push_back(lambda);
    sum += lambda;
    sum_sq += lambda * lambda;
  }
  r.nu = sum * sum / sum_sq;
  r.adjusted_statistic = r.nu * w / sum;  // nu W / (q * mean lambda)
  r.p_value = special::chi_squared_sf(r.adjusted_statistic, r.nu);
  return r;
}

TestResult wald_quadratic_test(const Eigen::VectorXd& estimate, const Eigen::VectorXd& null,
                               const Eigen::MatrixXd& g_inv_psi) {
  if (estimate.size() != null.size() || g_inv_psi.rows() != estimate.size())
    throw DomainError("wald_quadratic_test: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(g_inv_psi);
  if (llt.info() != Eigen::Success)
    throw NumericalError("wald_quadratic_test: covariance block is singular");
  const Eigen::VectorXd d = estimate - null;
  TestResult r;
  r.method = TestMethod::Wald;
  r.statistic = d.dot(llt.solve(d));
  r.adjusted_statistic = r.statistic;
  r.nu = static_cast<double>(d.size());
  r.p_value = special::chi_squared_sf(r.statistic, r.nu);
  return r;
}

namespace expfam {

namespace {

double logit(double p) { return std::log(p) - std::log1p(-p); }
double expit(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
double bernoulli_variance(double t) {
  const double p = expit(t);
  return p * (1.0 - p);
}

}  // namespace

Family Family::bernoulli() {
  Family f;
  f.name = "bernoulli";
  f.sufficient = [](double y) { return y; };
  f.log_partition = softplus;
  f.mean = expit;
  f.inverse_mean = logit;
  f.variance = bernoulli_variance;
  f.mean_lower = 0.0;
  f.mean_upper = 1.0;
  return f;
}

WeightedCohorts::WeightedCohorts(std::vector<WeightedCohort> cohorts) : cohorts_(std::move(cohorts)) {
  std::size_t targets = 0;
  for (std::size_t k = 0; k < cohorts_.size(); ++k) {
    const auto& c = cohorts_[k];
    if (!(c.weight >= 0.0 && c.weight <= 1.0))
      throw ConfigError("WeightedCohorts: weights must lie in [0, 1]");
    if (c.is_target) {
      ++targets;
      target_index_ = k;
      if (c.weight != 1.0) throw ConfigError("WeightedCohorts: target cohort must have weight 1");
    }
  }
  if (targets != 1) throw ConfigError("WeightedCohorts: exactly one cohort must be the target");
}

WeightedCohorts WeightedCohorts::target_and_references(OutcomeSample target,
                                                       std::vector<OutcomeSample> references,
                                                       std::vector<double> weights) {
  if (references.size() != weights.size())
    throw ConfigError("WeightedCohorts: one weight per reference cohort required");
  std::vector<WeightedCohort> cohorts;
  cohorts.reserve(references.size() + 1);
  cohorts.push_back({std::move(target), 1.0, true});
  for (std::size_t k = 0; k < references.size(); ++k)
    cohorts.push_back({std::move(references[k]), weights[k], false});
  return WeightedCohorts(std::move(cohorts));
}

WeightedCohorts WeightedCohorts::with_reference_weight(double w) const {
  auto copy = cohorts_;
  for (auto& c : copy)
    if (!c.is_target) c.weight = w;
  return WeightedCohorts(std::move(copy));
}

double CompositeFit::standard_error() const {
  if (!information) throw DomainError("CompositeFit: no variance at a boundary estimate");
  return std::sqrt(variance);
}

namespace {

double sufficient_sum(const OutcomeSample& s, const Family& family) {
  double t = 0.0;
  for (const auto y : s.values()) t += family.sufficient(static_cast<double>(y));
  return t;
}

}  // namespace

CompositeFit composite_mle(const WeightedCohorts& cohorts, const Family& family) {
  CompositeFit fit;
  for (const auto& c : cohorts) {
    if (c.weight == 0.0) continue;
    fit.weighted_n += c.weight * static_cast<double>(c.sample.size());
    fit.weighted_t += c.weight * sufficient_sum(c.sample, family);
  }
  if (!(fit.weighted_n > 0.0)) throw DomainError("composite_mle: total weighted sample size is zero");
  fit.mu_hat = fit.weighted_t / fit.weighted_n;
  fit.boundary = !(fit.mu_hat > family.mean_lower && fit.mu_hat < family.mean_upper);
  if (fit.boundary) {
    fit.theta_hat = fit.mu_hat <= family.mean_lower ? -HUGE_VAL : HUGE_VAL;
    return fit;
  }
  fit.theta_hat = family.inverse_mean(fit.mu_hat);
  const Information info = information(fit, cohorts, family);
  fit.information = info;
  fit.variance = info.J / (info.H * info.H);
  const double slope = family.variance(fit.theta_hat);
  fit.variance_theta = fit.variance / (slope * slope);
  return fit;
}

Information information(const CompositeFit& fit, const WeightedCohorts& cohorts,
                        const Family& family) {
  if (fit.boundary) throw DomainError("information: estimate on the boundary of the mean space");
  double wn = 0.0;
  double w2n = 0.0;
  for (const auto& c : cohorts) {
    const auto n = static_cast<double>(c.sample.size());
    wn += c.weight * n;
    w2n += c.weight * c.weight * n;
  }
  // Natural-scale information per unit is A''(theta); mean scale divides by A''^2.
  const double v = family.variance(family.inverse_mean(fit.mu_hat));
  Information info;
  info.H = wn / v;
  info.J = w2n / v;
  info.G = info.H * info.H / info.J;
  return info;
}

Information binomial_information(const CompositeFit& fit, const WeightedCohorts& cohorts) {
  if (fit.boundary) throw DomainError("binomial_information: estimate is 0 or 1");
  const double p = fit.mu_hat;
  double wn = 0.0;
  double w2n = 0.0;
  for (const auto& c : cohorts) {
    const auto n = static_cast<double>(c.sample.size());
    wn += c.weight * n;
    w2n += c.weight * c.weight * n;
  }
  Information info;
  info.H = wn / (p * (1.0 - p));
  info.J = w2n / (p * (1.0 - p));
  info.G = info.H * info.H / info.J;
  return info;
}

double composite_loglik(const WeightedCohorts& cohorts, const Family& family, double theta) {
  double ll = 0.0;
  for (const auto& c : cohorts) {
    if (c.weight == 0.0) continue;
    const auto n = static_cast<double>(c.sample.size());
    ll += c.weight * (theta * sufficient_sum(c.sample, family) - n * family.log_partition(theta));
  }
  return ll;
}

Interval wald_ci(const CompositeFit& fit, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("wald_ci: level must lie in (0, 1)");
  const double se = fit.standard_error();
  if (!std::isfinite(se)) throw NumericalError("wald_ci: variance is not finite");
  const double z = special::normal_quantile(0.5 * (1.0 + level));
  return {fit.mu_hat - z * se, fit.mu_hat + z * se};
}

TestResult clrt(const WeightedCohorts& cohorts, const Family& family, double mu0) {
  if (!(mu0 > family.mean_lower && mu0 < family.mean_upper))
    throw DomainError("clrt: null value outside the mean space");
  const CompositeFit fit = composite_mle(cohorts, family);
  if (fit.boundary) throw DomainError("clrt: composite MLE on the boundary; test undefined");
  const double theta0 = family.inverse_mean(mu0);
  double w = 2.0 * (composite_loglik(cohorts, family, fit.theta_hat) -
                    composite_loglik(cohorts, family, theta0));
  if (w < -1e-9) throw NumericalError("clrt: estimate does not maximize the composite likelihood");
  w = std::max(w, 0.0);

  // Scalar interest parameter: the single eigenvalue is H/J, nu = 1.
  const Information& info = *fit.information;
  TestResult r;
  r.method = TestMethod::ClrtSatterthwaite;
  r.statistic = w;
  r.lambdas = {info.H / info.J};
  r.nu = 1.0;
  r.adjusted_statistic = w * info.J / info.H;
  r.p_value = special::chi_squared_sf(r.adjusted_statistic, 1.0);
  return r;
}

TestResult wald_test(const CompositeFit& fit, double mu0) {
  if (!fit.information) throw DomainError("wald_test: no information at a boundary estimate");
  if (!(fit.variance > 0.0) || !std::isfinite(fit.variance))
    throw NumericalError("wald_test: variance is not positive and finite");
  const double d = fit.mu_hat - mu0;
  TestResult r;
  r.method = TestMethod::Wald;
  r.statistic = d * d / fit.variance;
  r.adjusted_statistic = r.statistic;
  r.nu = 1.0;
  r.p_value = special::chi_squared_sf(r.statistic, 1.0);
  return r;
}

}  // namespace expfam
}  // namespace clborrow
