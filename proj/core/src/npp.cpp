#include "clborrow/npp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clborrow/error.hpp"
#include "clborrow/special.hpp"

namespace clborrow::npp {

void BinomialCounts::validate() const {
  if (successes > trials) throw DomainError("binomial counts: successes exceed trials");
}

void NppConfig::validate() const {
  if (!(w_min >= 0.0 && w_min <= w_max && w_max <= 1.0))
    throw ConfigError("npp: weight support must satisfy 0 <= w_min <= w_max <= 1");
  if (w_min < w_max && w_grid < 101) throw ConfigError("npp: weight grid needs at least 101 nodes");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("npp: level must lie in (0, 1)");
}

double WeightMarginal::integral() const {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += trapezoid_weight[i] * density[i];
  return s;
}

namespace {

struct BetaParams {
  double alpha;
  double beta;
};

BetaParams conditional(const BinomialCounts& t, const BinomialCounts& r, double w) {
  return {static_cast<double>(t.successes) + w * static_cast<double>(r.successes) + 1.0,
          static_cast<double>(t.failures()) + w * static_cast<double>(r.failures()) + 1.0};
}

// Mixture of Beta conditionals with quadrature masses summing to 1.
struct Mixture {
  std::vector<double> w;
  std::vector<double> mass;
  std::vector<BetaParams> params;

  double cdf(double x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < mass.size(); ++i)
      if (mass[i] > 0.0) s += mass[i] * special::beta_cdf(x, params[i].alpha, params[i].beta);
    return s;
  }
};

Mixture build_mixture(const BinomialCounts& target, const BinomialCounts& reference,
                      const NppConfig& config) {
  Mixture mix;
  if (config.w_min == config.w_max) {
    mix.w = {config.w_min};
    mix.mass = {1.0};
    mix.params = {conditional(target, reference, config.w_min)};
    return mix;
  }
  const WeightMarginal m = weight_marginal(target, reference, config);
  // Nodes below 1e-17 of total mass cannot move any summary at double precision.
  for (std::size_t i = 0; i < m.w.size(); ++i) {
    const double mass = m.trapezoid_weight[i] * m.density[i];
    if (mass < 1e-17) continue;
    mix.w.push_back(m.w[i]);
    mix.mass.push_back(mass);
    mix.params.push_back(conditional(target, reference, m.w[i]));
  }
  return mix;
}

double mixture_quantile(const Mixture& mix, double prob) {
  if (mix.mass.size() == 1) return special::beta_quantile(prob, mix.params[0].alpha, mix.params[0].beta);
  // Bracket with the component quantiles, then bisect the monotone mixture CDF.
  double lo = 1.0;
  double hi = 0.0;
  for (std::size_t i = 0; i < mix.mass.size(); ++i) {
    if (mix.mass[i] <= 0.0) continue;
    const double q = special::beta_quantile(prob, mix.params[i].alpha, mix.params[i].beta);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mix.cdf(mid) < prob) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

WeightMarginal weight_marginal(const BinomialCounts& target, const BinomialCounts& reference,
                               const NppConfig& config) {
  target.validate();
  reference.validate();
  config.validate();
  if (config.w_min == config.w_max) throw ConfigError("npp: weight marginal needs a non-degenerate support");

  const std::size_t g = config.w_grid;
  const double h = (config.w_max - config.w_min) / static_cast<double>(g - 1);
  const auto sr = static_cast<double>(reference.successes);
  const auto fr = static_cast<double>(reference.failures());

  WeightMarginal m;
  m.w.resize(g);
  m.density.resize(g);
  m.trapezoid_weight.assign(g, h);
  m.trapezoid_weight.front() = m.trapezoid_weight.back() = 0.5 * h;

  std::vector<double> log_m(g);
  for (std::size_t i = 0; i < g; ++i) {
    const double w = i + 1 == g ? config.w_max : config.w_min + h * static_cast<double>(i);
    m.w[i] = w;
    const BetaParams post = conditional(target, reference, w);
    log_m[i] = special::log_beta(post.alpha, post.beta) - special::log_beta(w * sr + 1.0, w * fr + 1.0);
  }
  const double peak = *std::max_element(log_m.begin(), log_m.end());
  double total = 0.0;
  for (std::size_t i = 0; i < g; ++i) {
    m.density[i] = std::exp(log_m[i] - peak);
    total += m.trapezoid_weight[i] * m.density[i];
  }
  for (auto& d : m.density) d /= total;
  return m;
}

NppResult npp_posterior(const BinomialCounts& target, const BinomialCounts& reference,
                        const NppConfig& config, double p0) {
  target.validate();
  reference.validate();
  config.validate();
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw DomainError("npp: p0 must lie in [0, 1]");

  const Mixture mix = build_mixture(target, reference, config);
  NppResult r;
  for (std::size_t i = 0; i < mix.mass.size(); ++i) {
    const auto& bp = mix.params[i];
    r.p_mean += mix.mass[i] * bp.alpha / (bp.alpha + bp.beta);
    r.w_mean += mix.mass[i] * mix.w[i];
  }
  r.prob_le_p0 = std::clamp(mix.cdf(p0), 0.0, 1.0);
  r.prob_gt_p0 = 1.0 - r.prob_le_p0;
  if (config.credible_interval) {
    const double tail = 0.5 * (1.0 - config.level);
    r.p_credible = {mixture_quantile(mix, tail), mixture_quantile(mix, 1.0 - tail)};
  }
  return r;
}

}  // namespace clborrow::npp
