#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace clborrow {

/// Binary outcomes of one cohort (or one arm of a cohort).
class OutcomeSample {
 public:
  /// Throws DomainError if empty or any value is not 0/1.
  explicit OutcomeSample(std::vector<std::uint8_t> values);

  /// `successes` ones followed by `trials - successes` zeros.
  static OutcomeSample from_counts(std::size_t successes, std::size_t trials);

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t successes() const noexcept { return successes_; }
  double mean() const noexcept;
  /// Unbiased sample variance, n/(n-1) * p(1-p). Requires size() >= 2.
  double variance() const;
  std::span<const std::uint8_t> values() const noexcept { return values_; }

  friend bool operator==(const OutcomeSample&, const OutcomeSample&) = default;

 private:
  std::vector<std::uint8_t> values_;
  std::size_t successes_ = 0;
};

enum class WeightKind { Symmetric, Asymmetric, PValue };

/// Orientation of the p-value weight. Direct decays to `a` as samples become
/// congruent; Congruent swaps p and 1-p so congruent samples get `b`.
enum class PValueOrientation { Direct, Congruent };

/// Rising edge of the asymmetric weight on (g_low, c_low].
/// Continuous uses (tau - c_low) / (g_low - c_low); UpperWidth uses the
/// (c_upp - c_low) denominator, which jumps at g_low.
enum class AscendingBranch { Continuous, UpperWidth };

/// Bounded weight function parameters. Fields not used by `kind` are ignored.
struct WeightSpec {
  WeightKind kind = WeightKind::Symmetric;
  double a = 0.0;
  double b = 0.8;
  double c_low = 0.05;
  double c_upp = 0.1;
  double g_low = -0.01;
  double g_upp = 0.1;
  double shape_c = 0.01;
  PValueOrientation orientation = PValueOrientation::Congruent;
  AscendingBranch ascending = AscendingBranch::Continuous;

  static WeightSpec symmetric(double a, double b, double c_low, double c_upp);
  static WeightSpec asymmetric(double a, double b, double g_low, double c_low, double c_upp,
                               double g_upp);
  static WeightSpec pvalue(double a, double b, double shape_c,
                           PValueOrientation orientation = PValueOrientation::Congruent);

  /// Throws ConfigError when the bounds or thresholds are out of order.
  void validate() const;
};

struct Dissimilarity {
  double tau = 0.0;
  std::optional<double> p_value;
};

/// mean(reference) - mean(target).
double mean_difference(const OutcomeSample& target, const OutcomeSample& reference);

/// Welch unequal-variance t-test of equal means. `tau` holds the t statistic
/// (reference minus target), `p_value` the two-sided p-value.
Dissimilarity welch_test(const OutcomeSample& target, const OutcomeSample& reference);

double eval_w1(double tau, const WeightSpec& spec);
double eval_w2(double tau, const WeightSpec& spec);
double eval_w3(double p_value, const WeightSpec& spec);

/// Dispatches on spec.kind: w1/w2 read `d.tau`, w3 reads `d.p_value`.
double eval_weight(const Dissimilarity& d, const WeightSpec& spec);

/// Weight of `reference` relative to `target` for a single pair of samples:
/// mean difference for w1/w2, Welch p-value for w3.
double pairwise_weight(const OutcomeSample& target, const OutcomeSample& reference,
                       const WeightSpec& spec);

using ArmSamples = std::map<std::string, OutcomeSample, std::less<>>;
using ArmWeights = std::map<std::string, double, std::less<>>;

enum class MultiArmOption {
  Separate,             ///< one weight per arm from that arm's own dissimilarity
  TreatmentDifference,  ///< one weight from the change in treatment-vs-control difference
  Overall,              ///< one weight from the summed per-arm absolute differences
};

struct MultiArmConfig {
  MultiArmOption option = MultiArmOption::Separate;
  /// Control arm label; required by TreatmentDifference.
  std::string control_arm;
  /// Separate only: per-arm overrides, e.g. a smaller `b` on treatment arms.
  std::map<std::string, WeightSpec, std::less<>> per_arm;
};

/// Weights for every reference arm. Arm labels must match between target and reference.
ArmWeights multiarm_weights(const ArmSamples& target, const ArmSamples& reference,
                            const MultiArmConfig& config, const WeightSpec& spec);

}  // namespace clborrow
