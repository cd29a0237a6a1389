#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "clborrow/composite_expfam.hpp"
#include "clborrow/composite_glm.hpp"
#include "clborrow/dissimilarity.hpp"
#include "clborrow/npp.hpp"

namespace clborrow::study {

/// round-half-to-even(n * mean) ones followed by zeros.
OutcomeSample construct_binary_cohort(std::size_t n, double mean);

enum class SweepAxis { ReferenceMean, ReferenceSize };

struct SweepConfig {
  std::size_t target_n = 300;
  double target_mean = 0.2;

  /// ReferenceMean axis: reference size is fixed, tau = reference mean - target mean
  /// runs over `points` evenly spaced values in [tau_min, tau_max].
  std::size_t reference_n = 800;
  double tau_min = -0.2;
  double tau_max = 0.2;
  std::size_t points = 50;

  /// ReferenceSize axis: reference mean is fixed, size runs over `reference_sizes`.
  double reference_mean = 0.26;
  std::vector<std::size_t> reference_sizes = default_reference_sizes();

  WeightSpec w1 = WeightSpec::symmetric(0.0, 0.8, 0.05, 0.1);
  WeightSpec w2 = WeightSpec::asymmetric(0.0, 0.8, -0.01, 0.0, 0.05, 0.1);
  WeightSpec w3 = WeightSpec::pvalue(0.0, 0.8, 0.01);
  bool include_npp = true;
  npp::NppConfig npp{.w_min = 0.0, .w_max = 0.8, .w_grid = 2001, .level = 0.95, .credible_interval = false};

  /// Null value for the tests; defaults to the target sample mean.
  std::optional<double> p0;

  /// 20, 40, ..., 1000.
  static std::vector<std::size_t> default_reference_sizes();
  void validate(SweepAxis axis) const;
};

struct MethodResult {
  double weight = 0.0;
  double p_hat = 0.0;
  double p_value = 0.0;  ///< Satterthwaite-adjusted CLRT against p0
};

struct SweepRow {
  std::size_t index = 0;
  double axis_value = 0.0;  ///< grid tau or reference size
  double tau = 0.0;         ///< realized reference mean - target mean
  std::size_t reference_n = 0;
  std::size_t reference_successes = 0;
  bool skipped = false;
  std::string note;
  std::array<MethodResult, 3> methods{};  ///< w1, w2, w3
  std::optional<npp::NppResult> npp;
};

std::vector<SweepRow> sweep_reference_mean(const SweepConfig& config);
std::vector<SweepRow> sweep_reference_size(const SweepConfig& config);

/// CSV with header `<axis>,w1,w2,w3,w_npp,p_w1,p_w2,p_w3,p_npp,pval_w1,pval_w2,pval_w3,prob_npp`
/// where <axis> is `tau` or `n_k`. Skipped rows and absent NPP columns print `NA`.
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows, SweepAxis axis);

/// Width of the peak of y(x) measured at baseline + fraction * (max - baseline),
/// with crossings located by linear interpolation. `baseline` defaults to min(y)
/// (half prominence for fraction 0.5).
double peak_width(std::span<const double> x, std::span<const double> y, double fraction = 0.5,
                  std::optional<double> baseline = std::nullopt);

struct EssResult {
  double value = 0.0;
  bool negative = false;  ///< borrowing inflated the variance
};

/// n_target * (var_target_only / var_combined - 1).
EssResult ess(double var_target_only, double var_combined, std::size_t n_target);

enum class TippingMode {
  Uniform,  ///< every reference row takes the grid weight
  PerArm,   ///< only reference rows of `arm` take the grid weight; others keep theirs
};

struct BinomialTippingModel {
  OutcomeSample target;
  std::vector<OutcomeSample> references;
  double p0 = 0.5;
};

struct GlmTippingModel {
  std::vector<glm::DesignRow> rows;
  std::size_t coefficient = 1;  ///< H0: eta[coefficient] = 0, Wald test
  TippingMode mode = TippingMode::Uniform;
  std::string arm;
  glm::GlmOptions options;
};

using TippingModel = std::variant<BinomialTippingModel, GlmTippingModel>;

struct TippingRow {
  double weight = 0.0;
  double p_value = 0.0;
  bool reject = false;
  bool failed = false;
  std::string message;
};

struct TippingFlip {
  double weight_before = 0.0;
  double weight_after = 0.0;
  bool reject_before = false;
  bool reject_after = false;
};

struct TippingReport {
  double alpha = 0.05;
  std::vector<TippingRow> rows;
  std::vector<TippingFlip> flips;  ///< between consecutive successful grid points
};

/// Refit at each grid weight and record reject/accept at `alpha`. A failed fit
/// marks its row and the scan continues. The grid must be sorted within [0, 1].
TippingReport tipping_scan(const TippingModel& model, std::span<const double> weight_grid,
                           double alpha);

/// Evenly spaced grid lo, lo + step, ..., hi (inclusive).
std::vector<double> weight_grid(double lo, double hi, double step);

}  // namespace clborrow::study
