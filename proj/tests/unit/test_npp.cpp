#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "clborrow/error.hpp"
#include "clborrow/npp.hpp"
#include "clborrow/special.hpp"
#include "clborrow/study.hpp"
#include "oracles.hpp"

using namespace clborrow;
using npp::BinomialCounts;
using npp::NppConfig;

namespace {

const NppConfig kDefault{};

}  // namespace

TEST(Npp, Validation) {
  EXPECT_THROW(BinomialCounts({5, 3}).validate(), DomainError);
  EXPECT_THROW((NppConfig{.w_min = 0.5, .w_max = 0.2}).validate(), ConfigError);
  EXPECT_THROW((NppConfig{.w_min = 0.0, .w_max = 0.8, .w_grid = 50}).validate(), ConfigError);
  EXPECT_THROW((NppConfig{.w_min = 0.0, .w_max = 1.2}).validate(), ConfigError);
  EXPECT_THROW(npp::npp_posterior({60, 300}, {160, 800}, kDefault, 1.5), DomainError);
}

TEST(Npp, NoReferenceDataIsTargetBeta) {
  const auto r = npp::npp_posterior({60, 300}, {0, 0}, kDefault, 0.2);
  EXPECT_NEAR(r.p_mean, 61.0 / 302.0, 1e-10);
  EXPECT_NEAR(r.p_mean, 0.20199, 1e-5);
  EXPECT_NEAR(r.p_credible.lower, special::beta_quantile(0.025, 61, 241), 1e-10);
  EXPECT_NEAR(r.p_credible.upper, special::beta_quantile(0.975, 61, 241), 1e-10);
  EXPECT_NEAR(r.prob_le_p0, special::beta_cdf(0.2, 61, 241), 1e-10);
  // Flat marginal of w: its mean is the midpoint of the support.
  EXPECT_NEAR(r.w_mean, 0.4, 1e-10);
}

TEST(Npp, FullBorrowingConjugateLimit) {
  const NppConfig one{.w_min = 1.0, .w_max = 1.0};
  const auto r = npp::npp_posterior({60, 300}, {160, 800}, one, 0.21);
  const double a = 221, b = 881;
  EXPECT_NEAR(r.p_mean, a / (a + b), 1e-10);
  EXPECT_EQ(r.w_mean, 1.0);
  EXPECT_NEAR(r.p_credible.lower, special::beta_quantile(0.025, a, b), 1e-10);
  EXPECT_NEAR(r.p_credible.upper, special::beta_quantile(0.975, a, b), 1e-10);
  EXPECT_NEAR(r.prob_le_p0, special::beta_cdf(0.21, a, b), 1e-10);
  EXPECT_NEAR(r.prob_le_p0 + r.prob_gt_p0, 1.0, 1e-14);
}

TEST(Npp, AgreesWithTwoDimensionalGrid) {
  const auto r = npp::npp_posterior({60, 300}, {160, 800}, kDefault, 0.2);
  EXPECT_NEAR(r.p_mean, 0.2, 0.005);
  const auto o = oracle::npp_grid_2d(60, 300, 160, 800, 0.0, 0.8, 4001, 4001);
  EXPECT_NEAR(r.p_mean, o.p_mean, 1e-6);
  EXPECT_NEAR(r.w_mean, o.w_mean, 1e-6);
  const auto r2 = npp::npp_posterior({30, 100}, {50, 120}, kDefault, 0.2);
  const auto o2 = oracle::npp_grid_2d(30, 100, 50, 120, 0.0, 0.8, 4001, 4001);
  EXPECT_NEAR(r2.p_mean, o2.p_mean, 1e-6);
  EXPECT_NEAR(r2.w_mean, o2.w_mean, 1e-6);
}

TEST(Npp, NormalizationAndGridDoubling) {
  for (const auto& [t, r] : std::vector<std::pair<BinomialCounts, BinomialCounts>>{
           {{60, 300}, {160, 800}}, {{60, 300}, {260, 800}}, {{2, 29}, {7, 61}}, {{25, 55}, {46, 125}}}) {
    const auto m = npp::weight_marginal(t, r, kDefault);
    EXPECT_NEAR(m.integral(), 1.0, 1e-8);
    const auto coarse = npp::npp_posterior(t, r, kDefault, 0.2);
    const auto fine = npp::npp_posterior(t, r, NppConfig{.w_grid = 4001}, 0.2);
    EXPECT_LT(std::abs(coarse.p_mean - fine.p_mean), 1e-6);
    EXPECT_LT(std::abs(coarse.w_mean - fine.w_mean), 1e-5);
  }
}

TEST(Npp, ShrinkageBoundsAndRanges) {
  for (std::size_t sr : {40, 120, 160, 200, 300, 500}) {
    const BinomialCounts t{60, 300}, r{sr, 800};
    const auto res = npp::npp_posterior(t, r, kDefault, 0.2);
    const double alone = 61.0 / 302.0;
    const double pooled = (60.0 + sr + 1.0) / (300.0 + 800.0 + 2.0);
    EXPECT_GE(res.p_mean, std::min(alone, pooled) - 1e-12);
    EXPECT_LE(res.p_mean, std::max(alone, pooled) + 1e-12);
    EXPECT_GE(res.prob_le_p0, 0.0);
    EXPECT_LE(res.prob_le_p0, 1.0);
    EXPECT_NEAR(res.prob_le_p0 + res.prob_gt_p0, 1.0, 1e-12);
    EXPECT_GE(res.p_credible.lower, 0.0);
    EXPECT_LE(res.p_credible.upper, 1.0);
    EXPECT_LT(res.p_credible.lower, res.p_mean);
    EXPECT_GT(res.p_credible.upper, res.p_mean);
  }
}

TEST(Npp, LimitedBorrowingAtZeroDifference) {
  const auto r = npp::npp_posterior({60, 300}, {160, 800}, kDefault, 0.2);
  EXPECT_LT(r.w_mean, 0.8);
  EXPECT_GT(r.w_mean, 0.0);
}

TEST(Npp, WeightPeaksAtZeroDifferenceAndSharpensWithSize) {
  std::vector<double> widths;
  for (std::size_t nr : {800, 100}) {
    std::vector<double> tau, w;
    for (int i = -40; i <= 40; ++i) {
      const double mean = 0.2 + 0.005 * i;
      const auto ref = study::construct_binary_cohort(nr, mean);
      tau.push_back(ref.mean() - 0.2);
      w.push_back(npp::npp_posterior({60, 300}, {ref.successes(), nr},
                                     NppConfig{.credible_interval = false}, 0.2)
                      .w_mean);
    }
    const auto peak = std::max_element(w.begin(), w.end()) - w.begin();
    EXPECT_NEAR(tau[static_cast<std::size_t>(peak)], 0.0, 1e-12) << nr;
    widths.push_back(study::peak_width(tau, w, 0.9, 0.0));
  }
  EXPECT_LT(widths[0], widths[1]);
}
