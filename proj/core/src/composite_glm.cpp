#include "clborrow/composite_glm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "clborrow/error.hpp"
#include "clborrow/special.hpp"

namespace clborrow::glm {

namespace {

struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
  Eigen::VectorXd offset;
};

double expit(double t) {
  return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

Problem make_problem(std::span<const DesignRow> rows) {
  const std::size_t p = validate_rows(rows);
  Problem pr;
  const auto n = static_cast<Eigen::Index>(rows.size());
  pr.x.resize(n, static_cast<Eigen::Index>(p));
  pr.y.resize(n);
  pr.w.resize(n);
  pr.offset = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    pr.x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(r.x.data(), static_cast<Eigen::Index>(p));
    pr.y(i) = r.y;
    pr.w(i) = r.weight;
  }
  return pr;
}

double loglik(const Problem& pr, const Eigen::VectorXd& eta) {
  const Eigen::VectorXd lin = pr.x * eta + pr.offset;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lin.size(); ++i) {
    if (pr.w(i) == 0.0) continue;
    ll += pr.w(i) * (pr.y(i) * lin(i) - softplus(lin(i)));
  }
  return ll;
}

// Score and the weighted information matrix (negative Hessian).
void score_and_info(const Problem& pr, const Eigen::VectorXd& eta, Eigen::VectorXd& score,
                    Eigen::MatrixXd& info, double power = 1.0) {
  const Eigen::VectorXd lin = pr.x * eta + pr.offset;
  const auto p = pr.x.cols();
  score = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd s(lin.size());
  Eigen::VectorXd resid(lin.size());
  for (Eigen::Index i = 0; i < lin.size(); ++i) {
    const double mu = expit(lin(i));
    const double wi = pr.w(i);
    resid(i) = wi * (pr.y(i) - mu);
    s(i) = std::pow(wi, power) * mu * (1.0 - mu);
  }
  score = pr.x.transpose() * resid;
  info = pr.x.transpose() * s.asDiagonal() * pr.x;
}

void check_rank(const Problem& pr) {
  Eigen::Index active = 0;
  for (Eigen::Index i = 0; i < pr.w.size(); ++i)
    if (pr.w(i) > 0.0) ++active;
  Eigen::MatrixXd xa(active, pr.x.cols());
  for (Eigen::Index i = 0, k = 0; i < pr.w.size(); ++i)
    if (pr.w(i) > 0.0) xa.row(k++) = pr.x.row(i);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xa);
  if (active < pr.x.cols() || qr.rank() < pr.x.cols()) {
    std::ostringstream os;
    os << "fit_weighted_logistic: design is rank deficient on positively weighted rows (rank "
       << qr.rank() << " < " << pr.x.cols() << ")";
    throw NumericalError(os.str());
  }
}

// Largest |x_i'eta| over rows that carry weight.
double max_abs_predictor(const Problem& pr, const Eigen::VectorXd& eta) {
  const Eigen::VectorXd lin = pr.x * eta + pr.offset;
  double m = 0.0;
  for (Eigen::Index i = 0; i < lin.size(); ++i)
    if (pr.w(i) > 0.0) m = std::max(m, std::fabs(lin(i)));
  return m;
}

struct NewtonResult {
  Eigen::VectorXd eta;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  double score_norm = 0.0;
  std::string diagnostic;
};

NewtonResult newton(const Problem& pr, Eigen::VectorXd eta, const GlmOptions& opt) {
  NewtonResult res;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
  double ll = loglik(pr, eta);
  for (int it = 0; it <= opt.max_iterations; ++it) {
    score_and_info(pr, eta, score, info);
    res.score_norm = score.lpNorm<Eigen::Infinity>();
    res.iterations = it;
    if (res.score_norm < opt.score_tolerance) {
      if (max_abs_predictor(pr, eta) > opt.separation_bound) {
        std::ostringstream os;
        os << "separation suspected: fitted probabilities numerically 0 or 1 (|x'eta| > "
           << opt.separation_bound << ")";
        res.diagnostic = os.str();
      } else {
        res.converged = true;
      }
      break;
    }
    if (it == opt.max_iterations) {
      res.diagnostic = "iteration limit reached";
      break;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
      res.diagnostic = "information matrix lost positive definiteness";
      break;
    }
    const Eigen::VectorXd step = llt.solve(score);
    // Accept a step that does not decrease the objective beyond rounding noise.
    const double slack = 1e-12 * (1.0 + std::fabs(ll));
    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    double ll_new = ll;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      candidate = eta + scale * step;
      ll_new = loglik(pr, candidate);
      if (std::isfinite(ll_new) && ll_new >= ll - slack) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    if (!accepted) {
      res.diagnostic = "step halving failed to improve the objective";
      break;
    }
    eta = candidate;
    ll = ll_new;
    if (max_abs_predictor(pr, eta) > opt.separation_bound) {
      std::ostringstream os;
      os << "separation suspected: |x'eta| exceeded " << opt.separation_bound << " at iteration "
         << it + 1;
      res.diagnostic = os.str();
      res.iterations = it + 1;
      break;
    }
  }
  res.eta = std::move(eta);
  res.loglik = ll;
  return res;
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + " is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

std::size_t validate_rows(std::span<const DesignRow> rows) {
  if (rows.empty()) throw DomainError("design: no rows");
  const std::size_t p = rows.front().x.size();
  if (p == 0) throw DomainError("design: rows have no covariates");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.x.size() != p) throw DomainError("design: row " + std::to_string(i) + " has the wrong length");
    if (r.y != 0 && r.y != 1) throw DomainError("design: row " + std::to_string(i) + " response is not 0/1");
    if (!(r.weight >= 0.0 && r.weight <= 1.0))
      throw DomainError("design: row " + std::to_string(i) + " weight outside [0, 1]");
    if (r.is_target && r.weight != 1.0)
      throw DomainError("design: target row " + std::to_string(i) + " must have weight 1");
    for (const double v : r.x)
      if (!std::isfinite(v)) throw DomainError("design: row " + std::to_string(i) + " has a non-finite covariate");
  }
  return p;
}

GlmFit fit_weighted_logistic(std::span<const DesignRow> rows, const GlmOptions& options) {
  const Problem pr = make_problem(rows);
  check_rank(pr);
  const auto p = pr.x.cols();
  NewtonResult nr = newton(pr, Eigen::VectorXd::Zero(p), options);

  GlmFit fit;
  fit.eta = nr.eta;
  fit.loglik = nr.loglik;
  fit.iterations = nr.iterations;
  fit.converged = nr.converged;
  fit.max_score_norm = nr.score_norm;
  fit.diagnostic = nr.diagnostic;
  if (!fit.converged) return fit;

  Eigen::VectorXd score;
  score_and_info(pr, fit.eta, score, fit.H, 1.0);
  score_and_info(pr, fit.eta, score, fit.J, 2.0);
  const Eigen::MatrixXd h_inv = inverse_spd(fit.H, "sensitivity matrix H");
  fit.sandwich = h_inv * fit.J * h_inv;
  fit.sandwich = 0.5 * (fit.sandwich + fit.sandwich.transpose()).eval();
  return fit;
}

Eigen::VectorXd weighted_score(std::span<const DesignRow> rows, const Eigen::VectorXd& eta) {
  const Problem pr = make_problem(rows);
  if (pr.x.cols() != eta.size()) throw DomainError("weighted_score: coefficient length mismatch");
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
  score_and_info(pr, eta, score, info);
  return score;
}

Eigen::MatrixXd sandwich_cov(const GlmFit& fit, std::span<const DesignRow> rows) {
  if (!fit.converged) throw NumericalError("sandwich_cov: fit did not converge: " + fit.diagnostic);
  const Problem pr = make_problem(rows);
  Eigen::VectorXd score;
  Eigen::MatrixXd h;
  Eigen::MatrixXd j;
  score_and_info(pr, fit.eta, score, h, 1.0);
  score_and_info(pr, fit.eta, score, j, 2.0);
  const Eigen::MatrixXd h_inv = inverse_spd(h, "sensitivity matrix H");
  Eigen::MatrixXd cov = h_inv * j * h_inv;
  return 0.5 * (cov + cov.transpose());
}

std::vector<CoefficientInference> coef_inference(const GlmFit& fit, double level,
                                                 const std::vector<std::string>& names) {
  if (!fit.converged) throw NumericalError("coef_inference: fit did not converge: " + fit.diagnostic);
  if (!(level > 0.0 && level < 1.0)) throw DomainError("coef_inference: level must lie in (0, 1)");
  const auto p = static_cast<std::size_t>(fit.eta.size());
  if (!names.empty() && names.size() != p) throw DomainError("coef_inference: one name per coefficient");
  const double z = special::normal_quantile(0.5 * (1.0 + level));
  std::vector<CoefficientInference> out;
  out.reserve(p);
  for (std::size_t j = 0; j < p; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    CoefficientInference c;
    c.name = names.empty() ? "b" + std::to_string(j) : names[j];
    c.estimate = fit.eta(jj);
    c.se = std::sqrt(fit.sandwich(jj, jj));
    c.ci = {c.estimate - z * c.se, c.estimate + z * c.se};
    c.z = c.estimate / c.se;
    c.p_value = 2.0 * special::normal_sf(std::fabs(c.z));
    out.push_back(std::move(c));
  }
  return out;
}

TreatmentCoding TreatmentCoding::control_first(std::vector<std::string> arms, int first_column) {
  if (arms.empty()) throw ConfigError("TreatmentCoding: no arms");
  TreatmentCoding c;
  c.control_arm = arms.front();
  c.indicator_column.push_back(-1);
  for (std::size_t k = 1; k < arms.size(); ++k)
    c.indicator_column.push_back(first_column + static_cast<int>(k) - 1);
  c.arms = std::move(arms);
  return c;
}

bool TreatmentCoding::has_arm(std::string_view arm) const {
  return std::find(arms.begin(), arms.end(), arm) != arms.end();
}

void TreatmentCoding::apply(std::string_view arm, std::span<double> x) const {
  const auto it = std::find(arms.begin(), arms.end(), arm);
  if (it == arms.end()) throw DomainError("treatment coding: unknown arm '" + std::string(arm) + "'");
  const auto k = static_cast<std::size_t>(it - arms.begin());
  for (const int col : indicator_column)
    if (col >= 0) {
      if (static_cast<std::size_t>(col) >= x.size()) throw DomainError("treatment coding: column out of range");
      x[static_cast<std::size_t>(col)] = 0.0;
    }
  if (indicator_column[k] >= 0) x[static_cast<std::size_t>(indicator_column[k])] = 1.0;
}

MarginalResult gcomp_marginals(const GlmFit& fit, std::span<const DesignRow> target_rows,
                               const TreatmentCoding& coding, const std::vector<std::string>& arms,
                               double level) {
  if (!fit.converged) throw NumericalError("gcomp_marginals: fit did not converge: " + fit.diagnostic);
  if (!(level > 0.0 && level < 1.0)) throw DomainError("gcomp_marginals: level must lie in (0, 1)");
  if (target_rows.empty()) throw DomainError("gcomp_marginals: no target rows");
  for (const auto& a : arms)
    if (!coding.has_arm(a)) throw DomainError("gcomp_marginals: unknown arm '" + a + "'");
  const auto p = fit.eta.size();
  const double z = special::normal_quantile(0.5 * (1.0 + level));
  const double m = static_cast<double>(target_rows.size());

  std::vector<Eigen::VectorXd> gradients;
  MarginalResult out;
  for (const auto& arm : arms) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    double rate = 0.0;
    std::vector<double> x;
    for (const auto& r : target_rows) {
      if (static_cast<Eigen::Index>(r.x.size()) != p) throw DomainError("gcomp_marginals: row length mismatch");
      x = r.x;
      coding.apply(arm, x);
      const Eigen::Map<const Eigen::VectorXd> xv(x.data(), p);
      const double mu = expit(xv.dot(fit.eta));
      rate += mu;
      grad += mu * (1.0 - mu) * xv;
    }
    rate /= m;
    grad /= m;
    ArmRate ar;
    ar.arm = arm;
    ar.rate = rate;
    ar.se = std::sqrt(std::max(0.0, grad.dot(fit.sandwich * grad)));
    ar.ci = {rate - z * ar.se, rate + z * ar.se};
    out.rates.push_back(ar);
    gradients.push_back(std::move(grad));
  }

  const auto control = std::find(arms.begin(), arms.end(), coding.control_arm);
  if (control != arms.end()) {
    const auto c = static_cast<std::size_t>(control - arms.begin());
    for (std::size_t k = 0; k < arms.size(); ++k) {
      if (k == c) continue;
      const Eigen::VectorXd g = gradients[k] - gradients[c];
      RateDifference d;
      d.arm = arms[k];
      d.versus = arms[c];
      d.difference = out.rates[k].rate - out.rates[c].rate;
      d.se = std::sqrt(std::max(0.0, g.dot(fit.sandwich * g)));
      d.ci = {d.difference - z * d.se, d.difference + z * d.se};
      d.p_value = d.se > 0.0 ? 2.0 * special::normal_sf(std::fabs(d.difference) / d.se)
                             : (d.difference == 0.0 ? 1.0 : 0.0);
      out.differences.push_back(d);
    }
  }
  return out;
}

TestResult glm_clrt(std::span<const DesignRow> rows, const GlmFit& fit,
                    const std::vector<std::size_t>& psi, const Eigen::VectorXd& psi0,
                    const GlmOptions& options) {
  if (!fit.converged) throw NumericalError("glm_clrt: fit did not converge: " + fit.diagnostic);
  const Problem full = make_problem(rows);
  const auto p = full.x.cols();
  if (psi.empty() || static_cast<Eigen::Index>(psi.size()) != psi0.size())
    throw DomainError("glm_clrt: psi indices and null values must match");
  std::vector<bool> is_psi(static_cast<std::size_t>(p), false);
  for (const auto j : psi) {
    if (static_cast<Eigen::Index>(j) >= p || is_psi[j]) throw DomainError("glm_clrt: bad psi index");
    is_psi[j] = true;
  }

  // Null fit: psi columns move into the offset, nuisance columns stay free.
  Problem reduced;
  const auto q = static_cast<Eigen::Index>(psi.size());
  reduced.x.resize(full.x.rows(), p - q);
  reduced.y = full.y;
  reduced.w = full.w;
  reduced.offset = Eigen::VectorXd::Zero(full.x.rows());
  for (Eigen::Index k = 0; k < q; ++k) reduced.offset += psi0(k) * full.x.col(static_cast<Eigen::Index>(psi[static_cast<std::size_t>(k)]));
  std::vector<Eigen::Index> nuisance;
  for (Eigen::Index j = 0; j < p; ++j)
    if (!is_psi[static_cast<std::size_t>(j)]) {
      reduced.x.col(static_cast<Eigen::Index>(nuisance.size())) = full.x.col(j);
      nuisance.push_back(j);
    }

  double ll_null = 0.0;
  if (reduced.x.cols() > 0) {
    Eigen::VectorXd start(reduced.x.cols());
    for (std::size_t k = 0; k < nuisance.size(); ++k) start(static_cast<Eigen::Index>(k)) = fit.eta(nuisance[k]);
    const NewtonResult nr = newton(reduced, start, options);
    if (!nr.converged) throw NumericalError("glm_clrt: constrained fit failed: " + nr.diagnostic);
    ll_null = nr.loglik;
  } else {
    ll_null = loglik(reduced, Eigen::VectorXd::Zero(0));
  }
  const double w = 2.0 * (fit.loglik - ll_null);

  const Eigen::MatrixXd h_inv = inverse_spd(fit.H, "sensitivity matrix H");
  Eigen::MatrixXd h_psi(q, q);
  Eigen::MatrixXd g_psi(q, q);
  for (Eigen::Index a = 0; a < q; ++a)
    for (Eigen::Index b = 0; b < q; ++b) {
      const auto ia = static_cast<Eigen::Index>(psi[static_cast<std::size_t>(a)]);
      const auto ib = static_cast<Eigen::Index>(psi[static_cast<std::size_t>(b)]);
      h_psi(a, b) = h_inv(ia, ib);
      g_psi(a, b) = fit.sandwich(ia, ib);
    }
  return satterthwaite_test(w, h_psi, g_psi);
}

}  // namespace clborrow::glm
