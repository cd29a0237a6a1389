#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "clborrow/composite_expfam.hpp"

namespace clborrow::glm {

/// One subject. `x` carries the full covariate row including the intercept
/// and treatment indicators; `weight` is the borrowing weight of the subject's
/// (cohort, arm) block.
struct DesignRow {
  int y = 0;
  std::vector<double> x;
  std::string cohort;
  std::string arm;
  double weight = 1.0;
  bool is_target = false;
};

struct GlmOptions {
  int max_iterations = 100;
  int max_halvings = 30;
  double score_tolerance = 1e-10;
  /// A linear predictor |x_i'eta| beyond this on a weighted row is treated as separation.
  double separation_bound = 20.0;
};

struct GlmFit {
  Eigen::VectorXd eta;
  Eigen::MatrixXd H;         ///< sum w x S(x'eta) x'
  Eigen::MatrixXd J;         ///< sum w^2 x S(x'eta) x'
  Eigen::MatrixXd sandwich;  ///< H^{-1} J H^{-1}
  double loglik = 0.0;       ///< weighted composite log-likelihood at eta
  int iterations = 0;
  bool converged = false;
  double max_score_norm = 0.0;
  std::string diagnostic;
};

/// Validates rows (0/1 responses, equal row lengths, weights in [0, 1], target
/// rows at weight 1) and returns the column count. Throws DomainError.
std::size_t validate_rows(std::span<const DesignRow> rows);

/// Damped Newton maximization of sum_i w_i [y_i x_i'eta - log(1 + exp(x_i'eta))].
/// Throws NumericalError on a rank-deficient design. Non-convergence and
/// separation return converged = false with a diagnostic.
GlmFit fit_weighted_logistic(std::span<const DesignRow> rows, const GlmOptions& options = {});

/// Weighted score sum_i w_i (y_i - mu_i) x_i at eta.
Eigen::VectorXd weighted_score(std::span<const DesignRow> rows, const Eigen::VectorXd& eta);

/// H^{-1} J H^{-1} at the fitted eta. Throws on an unconverged fit or singular H.
Eigen::MatrixXd sandwich_cov(const GlmFit& fit, std::span<const DesignRow> rows);

struct CoefficientInference {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  Interval ci;
  double z = 0.0;
  double p_value = 1.0;
};

/// Wald CIs and two-sided p-values from sandwich standard errors.
/// `names` may be empty (coefficients are then named b0, b1, ...).
std::vector<CoefficientInference> coef_inference(const GlmFit& fit, double level,
                                                 const std::vector<std::string>& names = {});

/// Maps arm labels to treatment indicator columns. An arm whose column is -1
/// is the control: all indicators are zero for it.
struct TreatmentCoding {
  std::vector<std::string> arms;
  std::vector<int> indicator_column;
  std::string control_arm;

  /// Control first, then one indicator column per remaining arm starting at `first_column`.
  static TreatmentCoding control_first(std::vector<std::string> arms, int first_column = 1);
  void apply(std::string_view arm, std::span<double> x) const;
  bool has_arm(std::string_view arm) const;
};

struct ArmRate {
  std::string arm;
  double rate = 0.0;
  double se = 0.0;
  Interval ci;
};

struct RateDifference {
  std::string arm;
  std::string versus;
  double difference = 0.0;
  double se = 0.0;
  Interval ci;
  double p_value = 1.0;
};

struct MarginalResult {
  std::vector<ArmRate> rates;
  std::vector<RateDifference> differences;  ///< every non-control arm versus the control
};

/// G-computation: average predicted response over the target rows with the
/// treatment indicators set to each arm; delta-method standard errors from
/// the sandwich covariance. Intervals are not truncated to [0, 1].
MarginalResult gcomp_marginals(const GlmFit& fit, std::span<const DesignRow> target_rows,
                               const TreatmentCoding& coding, const std::vector<std::string>& arms,
                               double level);

/// Composite LR test of eta[psi] = psi0 with the Satterthwaite adjustment;
/// the nuisance coefficients are re-maximized under the null.
TestResult glm_clrt(std::span<const DesignRow> rows, const GlmFit& fit,
                    const std::vector<std::size_t>& psi, const Eigen::VectorXd& psi0,
                    const GlmOptions& options = {});

}  // namespace clborrow::glm
