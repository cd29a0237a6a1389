#pragma once

#include <cstddef>
#include <vector>

#include "clborrow/composite_expfam.hpp"

namespace clborrow::npp {

struct BinomialCounts {
  std::size_t successes = 0;
  std::size_t trials = 0;

  std::size_t failures() const noexcept { return trials - successes; }
  void validate() const;
};

/// Normalized power prior with p ~ U(0, 1) and w ~ U(w_min, w_max).
struct NppConfig {
  double w_min = 0.0;
  double w_max = 0.8;
  /// Trapezoid nodes on the weight axis. Unused when w_min == w_max.
  std::size_t w_grid = 2001;
  double level = 0.95;
  /// Sweeps only need means and tail probabilities; the interval costs two root solves.
  bool credible_interval = true;

  void validate() const;
};

struct NppResult {
  double p_mean = 0.0;
  double w_mean = 0.0;
  Interval p_credible;    ///< equal-tailed, exact mixture quantiles
  double prob_le_p0 = 0.0;  ///< P(p <= p0 | data)
  double prob_gt_p0 = 0.0;  ///< P(p > p0 | data)
};

/// Posterior marginal of w on the trapezoid grid. `density` is normalized so
/// that sum_i trapezoid_weight_i * density_i == 1.
struct WeightMarginal {
  std::vector<double> w;
  std::vector<double> density;
  std::vector<double> trapezoid_weight;

  double integral() const;
};

/// m(w) proportional to B(s_t + w s_r + 1, f_t + w f_r + 1) / B(w s_r + 1, w f_r + 1).
WeightMarginal weight_marginal(const BinomialCounts& target, const BinomialCounts& reference,
                               const NppConfig& config);

/// Posterior summaries by one-dimensional quadrature over w, using exact Beta
/// conditionals p | w ~ Beta(s_t + w s_r + 1, f_t + w f_r + 1). A collapsed
/// support (w_min == w_max) gives the fixed-weight conjugate posterior.
NppResult npp_posterior(const BinomialCounts& target, const BinomialCounts& reference,
                        const NppConfig& config, double p0);

}  // namespace clborrow::npp
