#include "clborrow/dissimilarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "clborrow/error.hpp"
#include "clborrow/special.hpp"

namespace clborrow {

OutcomeSample::OutcomeSample(std::vector<std::uint8_t> values) : values_(std::move(values)) {
  if (values_.empty()) throw DomainError("OutcomeSample: sample must contain at least one outcome");
  for (const auto v : values_) {
    if (v > 1) throw DomainError("OutcomeSample: outcomes must be 0 or 1");
    successes_ += v;
  }
}

OutcomeSample OutcomeSample::from_counts(std::size_t successes, std::size_t trials) {
  if (successes > trials) throw DomainError("OutcomeSample: successes exceed trials");
  std::vector<std::uint8_t> values(trials, 0);
  std::fill_n(values.begin(), successes, std::uint8_t{1});
  return OutcomeSample(std::move(values));
}

double OutcomeSample::mean() const noexcept {
  return static_cast<double>(successes_) / static_cast<double>(values_.size());
}

double OutcomeSample::variance() const {
  const auto n = values_.size();
  if (n < 2) throw DomainError("OutcomeSample: variance needs at least two outcomes");
  const double p = mean();
  return static_cast<double>(n) / static_cast<double>(n - 1) * p * (1.0 - p);
}

WeightSpec WeightSpec::symmetric(double a, double b, double c_low, double c_upp) {
  WeightSpec s;
  s.kind = WeightKind::Symmetric;
  s.a = a;
  s.b = b;
  s.c_low = c_low;
  s.c_upp = c_upp;
  return s;
}

WeightSpec WeightSpec::asymmetric(double a, double b, double g_low, double c_low, double c_upp,
                                  double g_upp) {
  WeightSpec s;
  s.kind = WeightKind::Asymmetric;
  s.a = a;
  s.b = b;
  s.g_low = g_low;
  s.c_low = c_low;
  s.c_upp = c_upp;
  s.g_upp = g_upp;
  return s;
}

WeightSpec WeightSpec::pvalue(double a, double b, double shape_c, PValueOrientation orientation) {
  WeightSpec s;
  s.kind = WeightKind::PValue;
  s.a = a;
  s.b = b;
  s.shape_c = shape_c;
  s.orientation = orientation;
  return s;
}

void WeightSpec::validate() const {
  if (!(a >= 0.0 && a < b && b <= 1.0)) throw ConfigError("weight spec: need 0 <= a < b <= 1");
  switch (kind) {
    case WeightKind::Symmetric:
      if (!(c_low >= 0.0 && c_low < c_upp))
        throw ConfigError("weight spec: need 0 <= c_low < c_upp");
      break;
    case WeightKind::Asymmetric:
      if (!(g_low < c_low && c_low <= c_upp && c_upp < g_upp))
        throw ConfigError("weight spec: need g_low < c_low <= c_upp < g_upp");
      if (ascending == AscendingBranch::UpperWidth && !(c_low < c_upp))
        throw ConfigError("weight spec: upper-width ascending branch needs c_low < c_upp");
      break;
    case WeightKind::PValue:
      if (!(shape_c > 0.0) || !std::isfinite(shape_c))
        throw ConfigError("weight spec: shape_c must be positive");
      break;
  }
}

namespace {

// a + (b-a) (1 - u^2)^2, the bisquare taper; u in [0, 1].
double taper(double a, double b, double u) {
  const double s = 1.0 - u * u;
  return a + (b - a) * s * s;
}

void require_kind(const WeightSpec& spec, WeightKind kind, const char* fn) {
  if (spec.kind != kind) throw ConfigError(std::string(fn) + ": weight spec has the wrong kind");
  spec.validate();
}

}  // namespace

double mean_difference(const OutcomeSample& target, const OutcomeSample& reference) {
  // Exact integer ratio, rounded once.
  const auto st = static_cast<std::int64_t>(target.successes()), nt = static_cast<std::int64_t>(target.size());
  const auto sr = static_cast<std::int64_t>(reference.successes()), nr = static_cast<std::int64_t>(reference.size());
  return static_cast<double>(sr * nt - st * nr) / static_cast<double>(nr * nt);
}

Dissimilarity welch_test(const OutcomeSample& target, const OutcomeSample& reference) {
  const auto nt = static_cast<double>(target.size());
  const auto nr = static_cast<double>(reference.size());
  if (target.size() < 2 || reference.size() < 2)
    throw DomainError("welch_test: each sample needs at least two outcomes");

  const double diff = mean_difference(target, reference);
  const double qt = target.variance() / nt;
  const double qr = reference.variance() / nr;
  const double se2 = qt + qr;
  if (se2 == 0.0) {
    // Both samples constant: identical means are perfectly congruent, anything else is not.
    if (diff == 0.0) return {0.0, 1.0};
    return {std::copysign(std::numeric_limits<double>::infinity(), diff), 0.0};
  }
  const double t = diff / std::sqrt(se2);
  const double df = se2 * se2 / (qt * qt / (nt - 1.0) + qr * qr / (nr - 1.0));
  return {t, special::student_t_two_sided(t, df)};
}

double eval_w1(double tau, const WeightSpec& spec) {
  require_kind(spec, WeightKind::Symmetric, "eval_w1");
  if (std::isnan(tau)) throw DomainError("eval_w1: tau is NaN");
  const double at = std::fabs(tau);
  if (at < spec.c_low) return spec.b;
  if (at > spec.c_upp) return spec.a;
  return taper(spec.a, spec.b, (at - spec.c_low) / (spec.c_upp - spec.c_low));
}

double eval_w2(double tau, const WeightSpec& spec) {
  require_kind(spec, WeightKind::Asymmetric, "eval_w2");
  if (std::isnan(tau)) throw DomainError("eval_w2: tau is NaN");
  if (tau <= spec.g_low || tau > spec.g_upp) return spec.a;
  if (tau < spec.c_low) {
    const double u = spec.ascending == AscendingBranch::Continuous
                         ? (tau - spec.c_low) / (spec.g_low - spec.c_low)
                         : (tau - spec.c_low) / (spec.c_upp - spec.c_low);
    return taper(spec.a, spec.b, u);
  }
  if (tau <= spec.c_upp) return spec.b;
  return taper(spec.a, spec.b, (tau - spec.c_upp) / (spec.g_upp - spec.c_upp));
}

double eval_w3(double p_value, const WeightSpec& spec) {
  require_kind(spec, WeightKind::PValue, "eval_w3");
  if (!(p_value >= 0.0 && p_value <= 1.0)) throw DomainError("eval_w3: p-value must lie in [0, 1]");
  const double c = spec.shape_c;
  // Exponent c * log(x) / (1 - x) with x the "congruence" coordinate; limit -c at x = 1.
  const bool congruent = spec.orientation == PValueOrientation::Congruent;
  const double x = congruent ? p_value : 1.0 - p_value;
  double exponent = 0.0;
  if (x <= 0.0) {
    return spec.a;
  } else if (x >= 1.0) {
    exponent = -c;
  } else {
    const double log_x = congruent ? std::log(p_value) : std::log1p(-p_value);
    exponent = c * log_x / (congruent ? 1.0 - p_value : p_value);
  }
  const double w = spec.a + (spec.b - spec.a) * std::exp(exponent);
  return std::clamp(w, spec.a, spec.b);
}

double eval_weight(const Dissimilarity& d, const WeightSpec& spec) {
  switch (spec.kind) {
    case WeightKind::Symmetric:
      return eval_w1(d.tau, spec);
    case WeightKind::Asymmetric:
      return eval_w2(d.tau, spec);
    case WeightKind::PValue:
      if (!d.p_value) throw DomainError("eval_weight: p-value weight needs a p-value");
      return eval_w3(*d.p_value, spec);
  }
  throw ConfigError("eval_weight: unknown weight kind");
}

double pairwise_weight(const OutcomeSample& target, const OutcomeSample& reference,
                       const WeightSpec& spec) {
  if (spec.kind == WeightKind::PValue) return eval_weight(welch_test(target, reference), spec);
  return eval_weight({mean_difference(target, reference), std::nullopt}, spec);
}

namespace {

const OutcomeSample& arm_of(const ArmSamples& samples, std::string_view arm, const char* which) {
  const auto it = samples.find(arm);
  if (it == samples.end())
    throw DomainError(std::string("multiarm_weights: arm '") + std::string(arm) +
                      "' missing from " + which + " cohort");
  return it->second;
}

// Normal-approximation variance of an arm mean; zero for constant arms.
double mean_variance(const OutcomeSample& s) {
  return s.size() < 2 ? 0.0 : s.variance() / static_cast<double>(s.size());
}

double two_sided_normal(double stat, double se2) {
  if (se2 == 0.0) return stat == 0.0 ? 1.0 : 0.0;
  return 2.0 * special::normal_sf(std::fabs(stat) / std::sqrt(se2));
}

}  // namespace

ArmWeights multiarm_weights(const ArmSamples& target, const ArmSamples& reference,
                            const MultiArmConfig& config, const WeightSpec& spec) {
  spec.validate();
  if (target.size() != reference.size())
    throw DomainError("multiarm_weights: target and reference arms differ");
  for (const auto& [arm, sample] : target) arm_of(reference, arm, "reference");

  ArmWeights out;
  switch (config.option) {
    case MultiArmOption::Separate: {
      for (const auto& [arm, t] : target) {
        const auto override_it = config.per_arm.find(arm);
        const WeightSpec& arm_spec = override_it == config.per_arm.end() ? spec : override_it->second;
        arm_spec.validate();
        out[arm] = pairwise_weight(t, arm_of(reference, arm, "reference"), arm_spec);
      }
      return out;
    }
    case MultiArmOption::TreatmentDifference: {
      const auto& tc = arm_of(target, config.control_arm, "target");
      const auto& rc = arm_of(reference, config.control_arm, "reference");
      if (target.size() < 2) throw DomainError("multiarm_weights: need a treatment arm");
      // Several treatment arms: the least congruent treatment contrast decides.
      double tau = 0.0;
      double p_value = 1.0;
      for (const auto& [arm, tt] : target) {
        if (arm == config.control_arm) continue;
        const auto& rt = arm_of(reference, arm, "reference");
        const double dd = (rt.mean() - rc.mean()) - (tt.mean() - tc.mean());
        tau = std::max(tau, std::fabs(dd));
        const double se2 = mean_variance(rt) + mean_variance(rc) + mean_variance(tt) + mean_variance(tc);
        p_value = std::min(p_value, two_sided_normal(dd, se2));
      }
      const double w = eval_weight({tau, p_value}, spec);
      for (const auto& [arm, sample] : reference) out[arm] = w;
      return out;
    }
    case MultiArmOption::Overall: {
      double tau = 0.0;
      double chi2 = 0.0;
      bool infinite = false;
      for (const auto& [arm, tt] : target) {
        const auto& rt = arm_of(reference, arm, "reference");
        const double d = rt.mean() - tt.mean();
        tau += std::fabs(d);
        const double se2 = mean_variance(rt) + mean_variance(tt);
        if (se2 == 0.0) {
          infinite = infinite || d != 0.0;
        } else {
          chi2 += d * d / se2;
        }
      }
      const double p_value =
          infinite ? 0.0 : special::chi_squared_sf(chi2, static_cast<double>(target.size()));
      const double w = eval_weight({tau, p_value}, spec);
      for (const auto& [arm, sample] : reference) out[arm] = w;
      return out;
    }
  }
  throw ConfigError("multiarm_weights: unknown option");
}

}  // namespace clborrow
