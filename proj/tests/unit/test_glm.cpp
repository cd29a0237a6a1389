#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include <gtest/gtest.h>

#include "clborrow/app/run.hpp"
#include "clborrow/composite_expfam.hpp"
#include "clborrow/composite_glm.hpp"
#include "clborrow/error.hpp"
#include "clborrow/special.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace clborrow;
using glm::DesignRow;

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<DesignRow> intercept_rows(std::size_t st, std::size_t nt, std::size_t sr, std::size_t nr, double w) {
  std::vector<DesignRow> rows;
  for (std::size_t i = 0; i < nt; ++i) rows.push_back({i < st ? 1 : 0, {1.0}, "t", "a", 1.0, true});
  for (std::size_t i = 0; i < nr; ++i) rows.push_back({i < sr ? 1 : 0, {1.0}, "r", "a", w, false});
  return rows;
}

struct Instance {
  std::vector<DesignRow> rows;
  std::size_t p = 1;
};

Instance random_instance(std::mt19937_64& rng, double reference_weight) {
  std::uniform_int_distribution<int> size(30, 100), dim(1, 4);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Instance inst;
  inst.p = static_cast<std::size_t>(dim(rng));
  std::vector<double> beta(inst.p);
  for (auto& b : beta) b = 0.6 * normal(rng);
  const int nt = size(rng), nr = size(rng);
  for (int i = 0; i < nt + nr; ++i) {
    DesignRow r;
    r.x.push_back(1.0);
    for (std::size_t j = 1; j < inst.p; ++j) r.x.push_back(normal(rng));
    double eta = 0.0;
    for (std::size_t j = 0; j < inst.p; ++j) eta += beta[j] * r.x[j];
    r.y = unif(rng) < expit(eta) ? 1 : 0;
    r.is_target = i < nt;
    r.cohort = r.is_target ? "t" : "r";
    r.arm = "a";
    r.weight = r.is_target ? 1.0 : reference_weight;
    inst.rows.push_back(std::move(r));
  }
  return inst;
}

oracle::LogisticFit oracle_fit(const std::vector<DesignRow>& rows) {
  oracle::Matrix x;
  std::vector<int> y;
  for (const auto& r : rows) {
    if (r.weight == 0.0) continue;
    x.push_back(r.x);
    y.push_back(r.y);
  }
  return oracle::irls_logistic(x, y);
}

std::vector<DesignRow> ad_like_rows(const std::map<std::string, double>& w, double base_scale = 1.0) {
  auto ds = synth::ad_like_dataset();
  for (auto& r : ds.rows) r.covariates[0] *= base_scale;
  return app::build_design(ds, synth::kTarget, {"placebo", "low", "high"}, {"BASE", "SEVERE"},
                           [&](const std::string&, const std::string& arm) { return w.at(arm); });
}

}  // namespace

TEST(Glm, InterceptOnly) {
  const auto rows = intercept_rows(60, 300, 0, 0, 0.0);
  const auto fit = glm::fit_weighted_logistic(rows);
  ASSERT_TRUE(fit.converged);
  EXPECT_NEAR(fit.eta[0], std::log(0.25), 1e-12);
  EXPECT_NEAR(fit.eta[0], -1.38629, 1e-5);
  EXPECT_LT(fit.max_score_norm, 1e-10);
}

TEST(Glm, InterceptOnlyBorrowedVariance) {
  const auto rows = intercept_rows(60, 300, 160, 800, 0.8);
  const auto fit = glm::fit_weighted_logistic(rows);
  const double h = 940 * 0.16, j = 812 * 0.16;
  EXPECT_NEAR(fit.H(0, 0), h, 1e-9);
  EXPECT_NEAR(fit.J(0, 0), j, 1e-9);
  EXPECT_NEAR(fit.sandwich(0, 0), j / (h * h), 1e-14);
  EXPECT_NEAR(fit.sandwich(0, 0), 0.0057435, 1e-7);
  const auto cohorts = expfam::WeightedCohorts::target_and_references(
      OutcomeSample::from_counts(60, 300), {OutcomeSample::from_counts(160, 800)}, {0.8});
  const auto ef = expfam::composite_mle(cohorts, expfam::Family::bernoulli());
  EXPECT_NEAR(fit.sandwich(0, 0), ef.variance / (0.16 * 0.16), 1e-14);

  const auto ci = glm::coef_inference(fit, 0.95).front();
  const double half = special::normal_quantile(0.975) * std::sqrt(j / (h * h));
  EXPECT_NEAR(ci.ci.lower, std::log(0.25) - half, 1e-12);
  EXPECT_NEAR(ci.ci.upper, std::log(0.25) + half, 1e-12);
  EXPECT_NEAR(ci.ci.lower, -1.534833, 1e-6);
  EXPECT_NEAR(ci.ci.upper, -1.237756, 1e-6);
  EXPECT_EQ(ci.name, "b0");
}

TEST(Glm, ReductionToIrlsOracle) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    for (double w : {0.0, 1.0}) {
      const auto inst = random_instance(rng, w);
      const auto fit = glm::fit_weighted_logistic(inst.rows);
      ASSERT_TRUE(fit.converged) << fit.diagnostic;
      const auto ref = oracle_fit(inst.rows);
      for (std::size_t j = 0; j < inst.p; ++j) {
        EXPECT_NEAR(fit.eta[j], ref.beta[j], 1e-8);
        for (std::size_t k = 0; k < inst.p; ++k)
          EXPECT_NEAR(fit.sandwich(j, k), ref.covariance[j][k], 1e-8 * (1 + std::abs(ref.covariance[j][k])));
      }
      const auto inf = glm::coef_inference(fit, 0.95);
      for (std::size_t j = 0; j < inst.p; ++j) {
        const double half = special::normal_quantile(0.975) * std::sqrt(ref.covariance[j][j]);
        EXPECT_NEAR(inf[j].ci.lower, ref.beta[j] - half, 1e-6);
        EXPECT_NEAR(inf[j].ci.upper, ref.beta[j] + half, 1e-6);
      }
    }
  }
}

TEST(Glm, SandwichCollapseAndScore) {
  std::mt19937_64 rng(11);
  for (double w : {0.0, 1.0, 0.4}) {
    const auto inst = random_instance(rng, w);
    const auto fit = glm::fit_weighted_logistic(inst.rows);
    ASSERT_TRUE(fit.converged);
    EXPECT_LT(glm::weighted_score(inst.rows, fit.eta).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LT((fit.sandwich - fit.sandwich.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.sandwich);
    EXPECT_GE(eig.eigenvalues().minCoeff(), 0.0);
    EXPECT_TRUE(fit.sandwich.isApprox(glm::sandwich_cov(fit, inst.rows), 1e-12));
    if (w == 0.0 || w == 1.0) {
      EXPECT_TRUE(fit.H.isApprox(fit.J, 1e-14));
      EXPECT_TRUE(fit.sandwich.isApprox(fit.H.inverse(), 1e-10));
    }
  }
}

TEST(Glm, ZeroReferenceWeightEqualsTargetOnlyFit) {
  auto rows = ad_like_rows({{"placebo", 0.0}, {"low", 0.0}, {"high", 0.0}});
  std::vector<DesignRow> target;
  for (const auto& r : rows)
    if (r.is_target) target.push_back(r);
  const auto a = glm::fit_weighted_logistic(rows), b = glm::fit_weighted_logistic(target);
  EXPECT_TRUE(a.eta.isApprox(b.eta, 1e-12));
  EXPECT_TRUE(a.sandwich.isApprox(b.sandwich, 1e-10));
}

TEST(Glm, RankDeficiencyAndSeparation) {
  std::vector<DesignRow> rows;
  for (int i = 0; i < 20; ++i) rows.push_back({i % 3 == 0, {1.0, 2.0}, "t", "a", 1.0, true});
  EXPECT_THROW(glm::fit_weighted_logistic(rows), NumericalError);
  std::vector<DesignRow> sep;
  for (int i = 0; i < 20; ++i) sep.push_back({i < 10 ? 0 : 1, {1.0, i < 10 ? -1.0 - i : 1.0 + i}, "t", "a", 1.0, true});
  const auto fit = glm::fit_weighted_logistic(sep);
  EXPECT_FALSE(fit.converged);
  EXPECT_FALSE(fit.diagnostic.empty());
  EXPECT_THROW(glm::sandwich_cov(fit, sep), NumericalError);
}

TEST(Glm, RowValidation) {
  std::vector<DesignRow> rows = {{2, {1.0}, "t", "a", 1.0, true}};
  EXPECT_THROW(glm::validate_rows(rows), DomainError);
  rows = {{1, {1.0}, "t", "a", 0.5, true}};
  EXPECT_THROW(glm::validate_rows(rows), DomainError);
  rows = {{1, {1.0}, "t", "a", 1.0, true}, {0, {1.0, 2.0}, "t", "a", 1.0, true}};
  EXPECT_THROW(glm::validate_rows(rows), DomainError);
  rows = {{1, {1.0}, "t", "a", 1.0, true}, {0, {1.0}, "r", "a", 1.5, false}};
  EXPECT_THROW(glm::validate_rows(rows), DomainError);
}

TEST(Gcomp, InterceptOnly) {
  const auto rows = intercept_rows(60, 300, 160, 800, 0.8);
  const auto fit = glm::fit_weighted_logistic(rows);
  std::vector<DesignRow> target(rows.begin(), rows.begin() + 300);
  const auto coding = glm::TreatmentCoding::control_first({"a"}, 1);
  const auto m = glm::gcomp_marginals(fit, target, coding, {"a"}, 0.95);
  ASSERT_EQ(m.rates.size(), 1u);
  EXPECT_NEAR(m.rates[0].rate, expit(fit.eta[0]), 1e-14);
  EXPECT_NEAR(m.rates[0].se * m.rates[0].se, 0.16 * 0.16 * fit.sandwich(0, 0), 1e-10);
  EXPECT_THROW(glm::gcomp_marginals(fit, target, coding, {"b"}, 0.95), DomainError);
}

TEST(Gcomp, CovariateFreeReturnsCrudeRates) {
  const auto ds = synth::crude_counts_dataset();
  const std::vector<std::string> arms = {"placebo", "low", "high"};
  for (const std::map<std::string, double> w :
       {std::map<std::string, double>{{"placebo", 0.0}, {"low", 0.0}, {"high", 0.0}},
        std::map<std::string, double>{{"placebo", 0.8}, {"low", 0.174}, {"high", 0.0}}}) {
    const auto rows = app::build_design(ds, synth::kTarget, arms, {},
                                        [&](const std::string&, const std::string& a) { return w.at(a); });
    const auto fit = glm::fit_weighted_logistic(rows);
    ASSERT_TRUE(fit.converged);
    std::vector<DesignRow> target;
    for (const auto& r : rows)
      if (r.is_target) target.push_back(r);
    const auto m = glm::gcomp_marginals(fit, target, glm::TreatmentCoding::control_first(arms, 1), arms, 0.95);
    const double crude[3][4] = {{2, 29, 7, 61}, {25, 55, 46, 125}, {35, 66, 72, 114}};
    for (std::size_t a = 0; a < 3; ++a) {
      const double wa = w.at(arms[a]);
      const double expected = (crude[a][0] + wa * crude[a][2]) / (crude[a][1] + wa * crude[a][3]);
      EXPECT_NEAR(m.rates[a].rate, expected, 1e-10) << arms[a];
      EXPECT_EQ(m.rates[a].arm, arms[a]);
    }
    ASSERT_EQ(m.differences.size(), 2u);
    EXPECT_EQ(m.differences[0].difference, m.rates[1].rate - m.rates[0].rate);
    EXPECT_EQ(m.differences[1].difference, m.rates[2].rate - m.rates[0].rate);
    EXPECT_EQ(m.differences[0].versus, "placebo");
  }
}

TEST(Gcomp, NoBorrowingCrudeAdolescentRates) {
  const auto ds = synth::crude_counts_dataset();
  const std::vector<std::string> arms = {"placebo", "low", "high"};
  const auto rows = app::build_design(ds, synth::kTarget, arms, {},
                                      [](const std::string&, const std::string&) { return 0.0; });
  const auto fit = glm::fit_weighted_logistic(rows);
  std::vector<DesignRow> target;
  for (const auto& r : rows)
    if (r.is_target) target.push_back(r);
  const auto m = glm::gcomp_marginals(fit, target, glm::TreatmentCoding::control_first(arms, 1), arms, 0.95);
  EXPECT_NEAR(m.rates[0].rate, 0.069, 5e-4);
  EXPECT_NEAR(m.rates[1].rate, 0.455, 5e-4);
  EXPECT_NEAR(m.rates[2].rate, 0.530, 5e-4);
}

TEST(Gcomp, AffineCovariateInvariance) {
  const std::map<std::string, double> w = {{"placebo", 0.8}, {"low", 0.174}, {"high", 0.0}};
  const auto a = ad_like_rows(w, 1.0), b = ad_like_rows(w, 10.0);
  const auto fa = glm::fit_weighted_logistic(a), fb = glm::fit_weighted_logistic(b);
  ASSERT_TRUE(fa.converged && fb.converged);
  EXPECT_NEAR(fb.eta[3], fa.eta[3] / 10.0, 1e-8);
  const auto ia = glm::coef_inference(fa, 0.95), ib = glm::coef_inference(fb, 0.95);
  for (std::size_t j = 0; j < ia.size(); ++j) EXPECT_NEAR(ia[j].p_value, ib[j].p_value, 1e-8);
  const std::vector<std::string> arms = {"placebo", "low", "high"};
  const auto coding = glm::TreatmentCoding::control_first(arms, 1);
  std::vector<DesignRow> ta, tb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].is_target) {
      ta.push_back(a[i]);
      tb.push_back(b[i]);
    }
  }
  const auto ma = glm::gcomp_marginals(fa, ta, coding, arms, 0.95);
  const auto mb = glm::gcomp_marginals(fb, tb, coding, arms, 0.95);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(ma.rates[k].rate, mb.rates[k].rate, 1e-8);
    EXPECT_NEAR(ma.rates[k].se, mb.rates[k].se, 1e-8);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(ma.differences[k].difference, mb.differences[k].difference, 1e-8);
    EXPECT_NEAR(ma.differences[k].p_value, mb.differences[k].p_value, 1e-8);
  }
}

TEST(GlmClrt, UnitWeightsMatchOrdinaryLrt) {
  const auto ds = synth::crude_counts_dataset();
  const std::vector<std::string> arms = {"placebo", "low", "high"};
  const auto rows = app::build_design(ds, synth::kTarget, arms, {},
                                      [](const std::string&, const std::string&) { return 1.0; });
  const auto fit = glm::fit_weighted_logistic(rows);
  const auto t = glm::glm_clrt(rows, fit, {1}, Eigen::VectorXd::Zero(1));
  // Null model: low arm pooled with placebo.
  oracle::Matrix x0, x1;
  std::vector<int> y;
  for (const auto& r : rows) {
    x1.push_back(r.x);
    x0.push_back({r.x[0], r.x[2]});
    y.push_back(r.y);
  }
  const auto f1 = oracle::irls_logistic(x1, y), f0 = oracle::irls_logistic(x0, y);
  const auto ll = [&](const oracle::Matrix& x, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double eta = 0.0;
      for (std::size_t j = 0; j < b.size(); ++j) eta += x[i][j] * b[j];
      s += y[i] * eta - std::log1p(std::exp(eta));
    }
    return s;
  };
  const double lrt = 2.0 * (ll(x1, f1.beta) - ll(x0, f0.beta));
  EXPECT_NEAR(t.statistic, lrt, 1e-8);
  EXPECT_NEAR(t.lambdas[0], 1.0, 1e-10);
  EXPECT_NEAR(t.p_value, special::chi_squared_sf(lrt, 1.0), 1e-10);
}
