#include "clborrow/study.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "clborrow/error.hpp"

namespace clborrow::study {

namespace {

// Round half to even, independent of the floating-point rounding mode.
double round_half_even(double v) {
  const double fl = std::floor(v);
  const double diff = v - fl;
  if (diff > 0.5) return fl + 1.0;
  if (diff < 0.5) return fl;
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_spec(const WeightSpec& spec, WeightKind kind, const char* label) {
  if (spec.kind != kind) throw ConfigError(std::string("sweep: ") + label + " has the wrong weight kind");
  spec.validate();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SweepRow evaluate_row(const SweepConfig& config, const OutcomeSample& target, std::size_t index,
                      double axis_value, std::size_t reference_n, double reference_mean, double p0) {
  SweepRow row;
  row.index = index;
  row.axis_value = axis_value;
  row.reference_n = reference_n;
  if (reference_mean < 0.0 && reference_mean > -1e-12) reference_mean = 0.0;
  if (reference_mean > 1.0 && reference_mean < 1.0 + 1e-12) reference_mean = 1.0;
  if (!(reference_mean >= 0.0 && reference_mean <= 1.0) || reference_n == 0) {
    row.skipped = true;
    row.note = "reference mean outside [0, 1]";
    row.tau = kNaN;
    for (auto& m : row.methods) m = {kNaN, kNaN, kNaN};
    return row;
  }
  const OutcomeSample reference = construct_binary_cohort(reference_n, reference_mean);
  row.reference_successes = reference.successes();
  row.tau = mean_difference(target, reference);

  const expfam::Family family = expfam::Family::bernoulli();
  const std::array<const WeightSpec*, 3> specs{&config.w1, &config.w2, &config.w3};
  for (std::size_t m = 0; m < specs.size(); ++m) {
    auto& out = row.methods[m];
    out = {kNaN, kNaN, kNaN};
    try {
      out.weight = pairwise_weight(target, reference, *specs[m]);
      const auto cohorts = expfam::WeightedCohorts::target_and_references(target, {reference}, {out.weight});
      const auto fit = expfam::composite_mle(cohorts, family);
      out.p_hat = fit.mu_hat;
      out.p_value = expfam::clrt(cohorts, family, p0).p_value;
    } catch (const std::exception& e) {
      if (!row.note.empty()) row.note += "; ";
      row.note += "w" + std::to_string(m + 1) + ": " + e.what();
    }
  }
  if (config.include_npp) {
    const npp::BinomialCounts t{target.successes(), target.size()};
    const npp::BinomialCounts r{reference.successes(), reference.size()};
    row.npp = npp::npp_posterior(t, r, config.npp, p0);
  }
  return row;
}

}  // namespace

OutcomeSample construct_binary_cohort(std::size_t n, double mean) {
  if (n == 0) throw DomainError("construct_binary_cohort: n must be at least 1");
  if (!(mean >= 0.0 && mean <= 1.0)) throw DomainError("construct_binary_cohort: mean must lie in [0, 1]");
  const double ones = round_half_even(static_cast<double>(n) * mean);
  return OutcomeSample::from_counts(static_cast<std::size_t>(ones), n);
}

std::vector<std::size_t> SweepConfig::default_reference_sizes() {
  std::vector<std::size_t> sizes;
  for (std::size_t n = 20; n <= 1000; n += 20) sizes.push_back(n);
  return sizes;
}

void SweepConfig::validate(SweepAxis axis) const {
  if (target_n == 0) throw ConfigError("sweep: target size must be positive");
  if (!(target_mean >= 0.0 && target_mean <= 1.0)) throw ConfigError("sweep: target mean must lie in [0, 1]");
  check_spec(w1, WeightKind::Symmetric, "w1");
  check_spec(w2, WeightKind::Asymmetric, "w2");
  check_spec(w3, WeightKind::PValue, "w3");
  if (include_npp) npp.validate();
  if (p0 && !(*p0 > 0.0 && *p0 < 1.0)) throw ConfigError("sweep: p0 must lie in (0, 1)");
  if (axis == SweepAxis::ReferenceMean) {
    if (points < 2) throw ConfigError("sweep: grid resolution must be at least 2");
    if (!(tau_min < tau_max)) throw ConfigError("sweep: need tau_min < tau_max");
    if (reference_n == 0) throw ConfigError("sweep: reference size must be positive");
  } else {
    if (reference_sizes.size() < 2) throw ConfigError("sweep: need at least two reference sizes");
    if (!(reference_mean >= 0.0 && reference_mean <= 1.0))
      throw ConfigError("sweep: reference mean must lie in [0, 1]");
    for (const auto n : reference_sizes)
      if (n == 0) throw ConfigError("sweep: reference sizes must be positive");
  }
}

std::vector<SweepRow> sweep_reference_mean(const SweepConfig& config) {
  config.validate(SweepAxis::ReferenceMean);
  const OutcomeSample target = construct_binary_cohort(config.target_n, config.target_mean);
  const double p0 = config.p0.value_or(target.mean());
  // Built around the center so a symmetric range gives exactly mirrored grid points.
  const double center = 0.5 * (config.tau_min + config.tau_max);
  const double half = 0.5 * (config.tau_max - config.tau_min);
  const auto last = static_cast<double>(config.points - 1);
  std::vector<SweepRow> rows;
  rows.reserve(config.points);
  for (std::size_t i = 0; i < config.points; ++i) {
    const double tau = center + half * (2.0 * static_cast<double>(i) - last) / last;
    rows.push_back(evaluate_row(config, target, i, tau, config.reference_n,
                                target.mean() + tau, p0));
  }
  return rows;
}

std::vector<SweepRow> sweep_reference_size(const SweepConfig& config) {
  config.validate(SweepAxis::ReferenceSize);
  const OutcomeSample target = construct_binary_cohort(config.target_n, config.target_mean);
  const double p0 = config.p0.value_or(target.mean());
  std::vector<SweepRow> rows;
  rows.reserve(config.reference_sizes.size());
  for (std::size_t i = 0; i < config.reference_sizes.size(); ++i) {
    const auto n = config.reference_sizes[i];
    rows.push_back(evaluate_row(config, target, i, static_cast<double>(n), n, config.reference_mean, p0));
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows, SweepAxis axis) {
  os << (axis == SweepAxis::ReferenceMean ? "tau" : "n_k")
     << ",w1,w2,w3,w_npp,p_w1,p_w2,p_w3,p_npp,pval_w1,pval_w2,pval_w3,prob_npp\n";
  for (const auto& r : rows) {
    const double axis_value = axis == SweepAxis::ReferenceMean ? (r.skipped ? r.axis_value : r.tau)
                                                               : r.axis_value;
    const auto npp_or_nan = [&](double npp::NppResult::*field) {
      return r.npp && !r.skipped ? (*r.npp).*field : kNaN;
    };
    os << format_double(axis_value);
    for (const auto& m : r.methods) os << ',' << format_double(m.weight);
    os << ',' << format_double(npp_or_nan(&npp::NppResult::w_mean));
    for (const auto& m : r.methods) os << ',' << format_double(m.p_hat);
    os << ',' << format_double(npp_or_nan(&npp::NppResult::p_mean));
    for (const auto& m : r.methods) os << ',' << format_double(m.p_value);
    os << ',' << format_double(npp_or_nan(&npp::NppResult::prob_le_p0)) << '\n';
  }
}

double peak_width(std::span<const double> x, std::span<const double> y, double fraction,
                  std::optional<double> baseline) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("peak_width: need matching x/y of length >= 2");
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("peak_width: fraction must lie in (0, 1)");
  const auto peak_it = std::max_element(y.begin(), y.end());
  const auto peak = static_cast<std::size_t>(peak_it - y.begin());
  const double base = baseline.value_or(*std::min_element(y.begin(), y.end()));
  const double level = base + fraction * (*peak_it - base);

  const auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double t = (y[inside] - level) / (y[inside] - y[outside]);
    return x[inside] + t * (x[outside] - x[inside]);
  };
  std::size_t l = peak;
  while (l > 0 && y[l - 1] >= level) --l;
  const double left = l == 0 ? x.front() : crossing(l, l - 1);
  std::size_t r = peak;
  while (r + 1 < y.size() && y[r + 1] >= level) ++r;
  const double right = r + 1 == y.size() ? x.back() : crossing(r, r + 1);
  return right - left;
}

EssResult ess(double var_target_only, double var_combined, std::size_t n_target) {
  if (!(var_target_only > 0.0) || !(var_combined > 0.0))
    throw DomainError("ess: variances must be positive");
  EssResult r;
  r.value = static_cast<double>(n_target) * (var_target_only / var_combined - 1.0);
  r.negative = r.value < 0.0;
  return r;
}

std::vector<double> weight_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo <= hi)) throw ConfigError("weight_grid: need lo <= hi and step > 0");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = lo + step * static_cast<double>(i);
  if (std::fabs(grid.back() - hi) < 1e-9 * std::max(1.0, std::fabs(hi))) grid.back() = hi;
  return grid;
}

namespace {

TippingRow scan_point(const BinomialTippingModel& m, double w, double alpha) {
  TippingRow row;
  row.weight = w;
  std::vector<double> weights(m.references.size(), w);
  const auto cohorts = expfam::WeightedCohorts::target_and_references(m.target, m.references, weights);
  row.p_value = expfam::clrt(cohorts, expfam::Family::bernoulli(), m.p0).p_value;
  row.reject = row.p_value < alpha;
  return row;
}

TippingRow scan_point(const GlmTippingModel& m, double w, double alpha) {
  TippingRow row;
  row.weight = w;
  auto rows = m.rows;
  for (auto& r : rows) {
    if (r.is_target) continue;
    if (m.mode == TippingMode::Uniform || r.arm == m.arm) r.weight = w;
  }
  const auto fit = glm::fit_weighted_logistic(rows, m.options);
  if (!fit.converged) throw NumericalError("fit did not converge: " + fit.diagnostic);
  if (m.coefficient >= static_cast<std::size_t>(fit.eta.size()))
    throw ConfigError("tipping: coefficient index out of range");
  row.p_value = glm::coef_inference(fit, 0.95)[m.coefficient].p_value;
  row.reject = row.p_value < alpha;
  return row;
}

}  // namespace

TippingReport tipping_scan(const TippingModel& model, std::span<const double> weight_grid,
                           double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("tipping: alpha must lie in (0, 1)");
  if (weight_grid.empty()) throw ConfigError("tipping: empty weight grid");
  for (std::size_t i = 0; i < weight_grid.size(); ++i) {
    if (!(weight_grid[i] >= 0.0 && weight_grid[i] <= 1.0)) throw ConfigError("tipping: weights must lie in [0, 1]");
    if (i > 0 && weight_grid[i] < weight_grid[i - 1]) throw ConfigError("tipping: weight grid must be sorted");
  }
  if (const auto* g = std::get_if<GlmTippingModel>(&model); g && g->mode == TippingMode::PerArm) {
    const bool found = std::any_of(g->rows.begin(), g->rows.end(),
                                   [&](const glm::DesignRow& r) { return !r.is_target && r.arm == g->arm; });
    if (!found) throw ConfigError("tipping: per-arm mode names an arm with no reference rows");
  }

  TippingReport report;
  report.alpha = alpha;
  for (const double w : weight_grid) {
    try {
      report.rows.push_back(std::visit([&](const auto& m) { return scan_point(m, w, alpha); }, model));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      TippingRow row;
      row.weight = w;
      row.p_value = kNaN;
      row.failed = true;
      row.message = e.what();
      report.rows.push_back(std::move(row));
    }
  }
  const TippingRow* previous = nullptr;
  for (const auto& row : report.rows) {
    if (row.failed) continue;
    if (previous && previous->reject != row.reject)
      report.flips.push_back({previous->weight, row.weight, previous->reject, row.reject});
    previous = &row;
  }
  return report;
}

}  // namespace clborrow::study
