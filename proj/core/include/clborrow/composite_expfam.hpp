#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "clborrow/dissimilarity.hpp"

namespace clborrow {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const noexcept { return upper - lower; }
};

enum class TestMethod { ClrtSatterthwaite, Wald };

struct TestResult {
  double statistic = 0.0;           ///< W (CLRT) or W_d (Wald)
  double adjusted_statistic = 0.0;  ///< W'' for CLRT; equals `statistic` for Wald
  std::vector<double> lambdas;
  double nu = 1.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::ClrtSatterthwaite;
};

/// Satterthwaite-adjusted composite LR test for a q-dimensional interest
/// parameter. `h_inv_psi` is the psi block of H^{-1} and `g_inv_psi` the psi
/// block of G^{-1} = H^{-1} J H^{-1}. The lambda_j are the eigenvalues of
/// (G^psi)^{-1} H^psi, computed from the symmetric form
/// (H^psi)^{1/2} (G^psi)^{-1} (H^psi)^{1/2}.
TestResult satterthwaite_test(double w, const Eigen::MatrixXd& h_inv_psi,
                              const Eigen::MatrixXd& g_inv_psi);

/// Wald statistic (est - null)' (G^psi)^{-1} (est - null) against chi^2_q.
TestResult wald_quadratic_test(const Eigen::VectorXd& estimate, const Eigen::VectorXd& null,
                               const Eigen::MatrixXd& g_inv_psi);

namespace expfam {

/// One-parameter exponential family f(y|theta) = h(y) exp(theta T(y) - A(theta)).
struct Family {
  std::string name;
  double (*sufficient)(double y);
  double (*log_partition)(double theta);
  double (*mean)(double theta);          ///< mu(theta) = A'(theta)
  double (*inverse_mean)(double mu);     ///< mu^{-1}
  double (*variance)(double theta);      ///< A''(theta) = d mu / d theta
  double mean_lower = 0.0;               ///< open interval of attainable means
  double mean_upper = 1.0;

  static Family bernoulli();
};

struct WeightedCohort {
  OutcomeSample sample;
  double weight = 1.0;
  bool is_target = false;
};

/// Cohorts entering a composite likelihood. Exactly one cohort is the target
/// and carries weight 1; every weight lies in [0, 1].
class WeightedCohorts {
 public:
  explicit WeightedCohorts(std::vector<WeightedCohort> cohorts);

  /// Target with weight 1 followed by references with the given weights.
  static WeightedCohorts target_and_references(OutcomeSample target,
                                               std::vector<OutcomeSample> references,
                                               std::vector<double> weights);

  const std::vector<WeightedCohort>& cohorts() const noexcept { return cohorts_; }
  const WeightedCohort& target() const { return cohorts_[target_index_]; }
  auto begin() const noexcept { return cohorts_.begin(); }
  auto end() const noexcept { return cohorts_.end(); }

  /// Copy with every non-target weight replaced by `w`.
  WeightedCohorts with_reference_weight(double w) const;

 private:
  std::vector<WeightedCohort> cohorts_;
  std::size_t target_index_ = 0;
};

struct Information {
  double H = 0.0;  ///< sensitivity, mean scale
  double J = 0.0;  ///< variability, mean scale
  double G = 0.0;  ///< Godambe H J^{-1} H
};

struct CompositeFit {
  double theta_hat = 0.0;    ///< natural parameter (logit p for Bernoulli)
  double mu_hat = 0.0;       ///< mean-scale estimate
  double weighted_n = 0.0;   ///< sum_k w_k n_k
  double weighted_t = 0.0;   ///< sum_k w_k sum_i T(Y_ik)
  bool boundary = false;     ///< mu_hat at the edge of the mean space; no inference
  std::optional<Information> information;
  double variance = 0.0;        ///< Var(mu_hat) = J / H^2
  double variance_theta = 0.0;  ///< Var(theta_hat)

  double standard_error() const;
};

/// Closed-form composite MLE: mu_hat is the weighted mean of T. Information
/// and variances are filled in when mu_hat is interior.
CompositeFit composite_mle(const WeightedCohorts& cohorts, const Family& family);

/// H, J, G on the mean scale at the fitted mean; throws DomainError at the boundary.
Information information(const CompositeFit& fit, const WeightedCohorts& cohorts,
                        const Family& family);

/// Bernoulli specialization: H = sum w n / (p(1-p)), J = sum w^2 n / (p(1-p)).
Information binomial_information(const CompositeFit& fit, const WeightedCohorts& cohorts);

/// Composite log-likelihood sum_k w_k (theta S_k - n_k A(theta)), up to constants.
double composite_loglik(const WeightedCohorts& cohorts, const Family& family, double theta);

/// mu_hat +- z * SE on the mean scale.
Interval wald_ci(const CompositeFit& fit, double level);

/// Composite LR test of mu = mu0 with the scalar Satterthwaite adjustment.
TestResult clrt(const WeightedCohorts& cohorts, const Family& family, double mu0);

/// Wald test of mu = mu0 on the mean scale.
TestResult wald_test(const CompositeFit& fit, double mu0);

}  // namespace expfam
}  // namespace clborrow
