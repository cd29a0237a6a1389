#include "clborrow/app/run.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "clborrow/composite_expfam.hpp"
#include "clborrow/composite_glm.hpp"
#include "clborrow/dissimilarity.hpp"
#include "clborrow/error.hpp"
#include "clborrow/npp.hpp"
#include "clborrow/study.hpp"

namespace clborrow::app {

using nlohmann::json;

namespace {

// Keys whose values are weight specifications: {"kind": "w1"|"w2"|"w3", ...}.
const std::set<std::string> kWeightSpecKeys = {"weight_spec", "w1", "w2", "w3"};
const std::set<std::string> kWeightSpecFields = {"kind",    "a",      "b",       "c_low",
                                                 "c_upp",   "g_low",  "g_upp",   "shape_c",
                                                 "orientation", "ascending"};

json glm_keys() {
  return {
      {"target_cohort", nullptr},
      {"arms", nullptr},
      {"covariates", nullptr},
      {"weights", nullptr},
      {"weight_spec", {{"kind", "w1"}}},
      {"multiarm", {{"option", "separate"}, {"control_arm", nullptr}}},
      {"level", 0.95},
  };
}

json sweep_keys() {
  return {
      {"target", {{"n", 300}, {"mean", 0.2}}},
      {"w1", {{"kind", "w1"}}},
      {"w2", {{"kind", "w2"}}},
      {"w3", {{"kind", "w3"}}},
      {"npp", {{"enabled", true}, {"w_min", 0.0}, {"w_max", 0.8}, {"w_grid", 2001}}},
      {"p0", nullptr},
      {"width_fraction", 0.5},
  };
}

json defaults_for(const std::string& sub) {
  if (sub == "fit") {
    return {
        {"target_cohort", nullptr}, {"arm", nullptr},        {"target", nullptr},
        {"references", nullptr},    {"weights", nullptr},    {"weight_spec", {{"kind", "w1"}}},
        {"p0", nullptr},            {"level", 0.95},
    };
  }
  if (sub == "glm") {
    json d = glm_keys();
    d["clrt"] = true;
    return d;
  }
  if (sub == "sweep-mean") {
    json d = sweep_keys();
    d["reference_n"] = 800;
    d["tau_min"] = -0.2;
    d["tau_max"] = 0.2;
    d["points"] = 50;
    return d;
  }
  if (sub == "sweep-size") {
    json d = sweep_keys();
    d["reference_mean"] = 0.26;
    json sizes = json::array();
    for (const auto n : study::SweepConfig::default_reference_sizes()) sizes.push_back(n);
    d["reference_sizes"] = sizes;
    return d;
  }
  if (sub == "npp") {
    return {
        {"target_cohort", nullptr}, {"reference_cohort", nullptr}, {"arm", nullptr},
        {"target", nullptr},        {"reference", nullptr},        {"w_min", 0.0},
        {"w_max", 0.8},             {"w_grid", 2001},              {"level", 0.95},
        {"p0", nullptr},
    };
  }
  if (sub == "ess") {
    json d = glm_keys();
    d["model"] = "binomial";
    d["arm"] = nullptr;
    d["target"] = nullptr;
    d["references"] = nullptr;
    return d;
  }
  if (sub == "tipping") {
    json d = glm_keys();
    d["model"] = "binomial";
    d["arm"] = nullptr;
    d["target"] = nullptr;
    d["references"] = nullptr;
    d["p0"] = nullptr;
    d["alpha"] = 0.05;
    d["grid"] = {{"from", 0.0}, {"to", 1.0}, {"step", 0.05}};
    d["coefficient"] = nullptr;
    d["mode"] = "uniform";
    d["tipping_arm"] = nullptr;
    return d;
  }
  throw ConfigError("unknown subcommand '" + sub + "'");
}

void check_weight_spec_keys(const json& spec, const std::string& path) {
  if (!spec.is_object()) throw ConfigError(path + ": weight specification must be an object");
  for (const auto& [k, v] : spec.items()) {
    if (!kWeightSpecFields.count(k)) throw ConfigError("unknown key '" + path + "." + k + "'");
  }
}

void merge_into(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string key_path = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown key '" + key_path + "'");
    json& slot = base[k];
    if (kWeightSpecKeys.count(k) && path.empty()) {
      check_weight_spec_keys(v, key_path);
      slot = v;
    } else if (slot.is_object() && !slot.empty()) {
      merge_into(slot, v, key_path);
    } else {
      slot = v;
    }
  }
}

json parse_override_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

void apply_override(json& patch, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
  const std::string key = item.substr(0, eq);
  json* node = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + item + "' has an empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = parse_override_value(item.substr(eq + 1));
      break;
    }
    json& child = (*node)[part];
    if (!child.is_object()) child = json::object();
    node = &child;
    start = dot + 1;
  }
}

// ---- typed accessors ---------------------------------------------------------

double get_double(const json& s, const std::string& key) {
  const auto& v = s.at(key);
  if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
  return v.get<double>();
}

std::optional<double> get_opt_double(const json& s, const std::string& key) {
  if (!s.contains(key) || s.at(key).is_null()) return std::nullopt;
  return get_double(s, key);
}

std::size_t get_size(const json& s, const std::string& key) {
  const auto& v = s.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError("'" + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

bool get_bool(const json& s, const std::string& key) {
  const auto& v = s.at(key);
  if (!v.is_boolean()) throw ConfigError("'" + key + "' must be true or false");
  return v.get<bool>();
}

std::optional<std::string> get_opt_string(const json& s, const std::string& key) {
  if (!s.contains(key) || s.at(key).is_null()) return std::nullopt;
  if (!s.at(key).is_string()) throw ConfigError("'" + key + "' must be a string");
  return s.at(key).get<std::string>();
}

std::optional<std::vector<std::string>> get_opt_strings(const json& s, const std::string& key) {
  if (!s.contains(key) || s.at(key).is_null()) return std::nullopt;
  const auto& v = s.at(key);
  if (!v.is_array()) throw ConfigError("'" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError("'" + key + "' must be an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

WeightSpec parse_weight_spec(const json& j, const std::string& path) {
  check_weight_spec_keys(j, path);
  const std::string kind = j.value("kind", std::string("w1"));
  WeightSpec spec;
  if (kind == "w1") {
    spec = WeightSpec::symmetric(0.0, 0.8, 0.05, 0.1);
  } else if (kind == "w2") {
    spec = WeightSpec::asymmetric(0.0, 0.8, -0.01, 0.0, 0.05, 0.1);
  } else if (kind == "w3") {
    spec = WeightSpec::pvalue(0.0, 0.8, 0.01);
  } else {
    throw ConfigError(path + ".kind must be w1, w2 or w3");
  }
  const auto num = [&](const char* k, double& field) {
    if (!j.contains(k)) return;
    if (!j.at(k).is_number()) throw ConfigError(path + "." + k + " must be a number");
    field = j.at(k).get<double>();
  };
  num("a", spec.a);
  num("b", spec.b);
  num("c_low", spec.c_low);
  num("c_upp", spec.c_upp);
  num("g_low", spec.g_low);
  num("g_upp", spec.g_upp);
  num("shape_c", spec.shape_c);
  if (j.contains("orientation")) {
    const auto o = j.at("orientation");
    if (o == "congruent") {
      spec.orientation = PValueOrientation::Congruent;
    } else if (o == "direct") {
      spec.orientation = PValueOrientation::Direct;
    } else {
      throw ConfigError(path + ".orientation must be congruent or direct");
    }
  }
  if (j.contains("ascending")) {
    const auto a = j.at("ascending");
    if (a == "continuous") {
      spec.ascending = AscendingBranch::Continuous;
    } else if (a == "upper_width") {
      spec.ascending = AscendingBranch::UpperWidth;
    } else {
      throw ConfigError(path + ".ascending must be continuous or upper_width");
    }
  }
  spec.validate();
  return spec;
}

json weight_spec_json(const WeightSpec& s) {
  json j;
  switch (s.kind) {
    case WeightKind::Symmetric:
      j = {{"kind", "w1"}, {"a", s.a}, {"b", s.b}, {"c_low", s.c_low}, {"c_upp", s.c_upp}};
      break;
    case WeightKind::Asymmetric:
      j = {{"kind", "w2"},       {"a", s.a},         {"b", s.b},         {"g_low", s.g_low},
           {"c_low", s.c_low},   {"c_upp", s.c_upp}, {"g_upp", s.g_upp},
           {"ascending", s.ascending == AscendingBranch::Continuous ? "continuous" : "upper_width"}};
      break;
    case WeightKind::PValue:
      j = {{"kind", "w3"},
           {"a", s.a},
           {"b", s.b},
           {"shape_c", s.shape_c},
           {"orientation", s.orientation == PValueOrientation::Congruent ? "congruent" : "direct"}};
      break;
  }
  return j;
}

MultiArmOption parse_multiarm_option(const std::string& s) {
  if (s == "separate") return MultiArmOption::Separate;
  if (s == "treatment_difference") return MultiArmOption::TreatmentDifference;
  if (s == "overall") return MultiArmOption::Overall;
  throw ConfigError("multiarm.option must be separate, treatment_difference or overall");
}

double check_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("'level' must lie in (0, 1)");
  return level;
}

json interval_json(const Interval& i) { return json::array({i.lower, i.upper}); }

json test_json(const TestResult& t) {
  json j = {{"statistic", t.statistic},
            {"adjusted_statistic", t.adjusted_statistic},
            {"nu", t.nu},
            {"p_value", t.p_value},
            {"method", t.method == TestMethod::Wald ? "wald" : "clrt_satterthwaite"}};
  j["lambdas"] = t.lambdas;
  return j;
}

// Doubles that are not finite have no JSON literal; they print as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---- binomial inputs -----------------------------------------------------------

struct BinomialInputs {
  std::string target_label = "target";
  OutcomeSample target = OutcomeSample::from_counts(0, 1);
  std::vector<std::string> reference_labels;
  std::vector<OutcomeSample> references;
};

OutcomeSample sample_from_rows(const Dataset& ds, const std::string& cohort,
                               const std::optional<std::string>& arm) {
  std::vector<std::uint8_t> values;
  for (const auto& r : ds.rows) {
    if (r.cohort == cohort && (!arm || r.arm == *arm)) values.push_back(static_cast<std::uint8_t>(r.y));
  }
  if (values.empty()) {
    throw DataError("no rows for cohort '" + cohort + "'" + (arm ? " and arm '" + *arm + "'" : ""));
  }
  return OutcomeSample(std::move(values));
}

OutcomeSample sample_from_spec(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "n" && k != "mean" && k != "successes")
      throw ConfigError("unknown key '" + path + "." + k + "'");
  }
  if (!j.contains("n") || !j.at("n").is_number_integer() || j.at("n").get<long long>() < 1)
    throw ConfigError(path + ".n must be a positive integer");
  const auto n = j.at("n").get<std::size_t>();
  if (j.contains("successes") == j.contains("mean"))
    throw ConfigError(path + " needs exactly one of 'mean' or 'successes'");
  if (j.contains("successes")) {
    if (!j.at("successes").is_number_integer() || j.at("successes").get<long long>() < 0 ||
        j.at("successes").get<std::size_t>() > n)
      throw ConfigError(path + ".successes must be an integer in [0, n]");
    return OutcomeSample::from_counts(j.at("successes").get<std::size_t>(), n);
  }
  if (!j.at("mean").is_number()) throw ConfigError(path + ".mean must be a number");
  const double mean = j.at("mean").get<double>();
  if (!(mean >= 0.0 && mean <= 1.0)) throw ConfigError(path + ".mean must lie in [0, 1]");
  return study::construct_binary_cohort(n, mean);
}

BinomialInputs binomial_inputs(const json& s, const std::optional<Dataset>& dataset,
                               bool need_references = true) {
  BinomialInputs in;
  const auto target_cohort = get_opt_string(s, "target_cohort");
  const bool summary = !s.at("target").is_null();
  if (summary && target_cohort) throw ConfigError("give either 'target' or 'target_cohort', not both");
  if (summary) {
    in.target = sample_from_spec(s.at("target"), "target");
    const auto& refs = s.at("references");
    if (refs.is_null()) {
      if (need_references) throw ConfigError("'references' is required with 'target'");
      return in;
    }
    if (!refs.is_array()) throw ConfigError("'references' must be an array");
    for (std::size_t k = 0; k < refs.size(); ++k) {
      in.references.push_back(sample_from_spec(refs[k], "references[" + std::to_string(k) + "]"));
      in.reference_labels.push_back("reference" + std::to_string(k + 1));
    }
    if (need_references && in.references.empty()) throw ConfigError("'references' is empty");
    return in;
  }
  if (!dataset) throw ConfigError("either 'target' or a dataset with 'target_cohort' is required");
  if (!target_cohort) throw ConfigError("'target_cohort' is required with a dataset");
  auto arm = get_opt_string(s, "arm");
  if (!arm && dataset->arms().size() > 1)
    throw ConfigError("dataset has several arms; set 'arm'");
  in.target_label = *target_cohort;
  in.target = sample_from_rows(*dataset, *target_cohort, arm);
  for (const auto& c : dataset->cohorts()) {
    if (c == *target_cohort) continue;
    in.reference_labels.push_back(c);
    in.references.push_back(sample_from_rows(*dataset, c, arm));
  }
  if (need_references && in.references.empty()) throw DataError("dataset has no reference cohort");
  return in;
}

std::vector<double> fixed_or_computed_weights(const json& s, const BinomialInputs& in,
                                              const WeightSpec& spec) {
  const auto& w = s.at("weights");
  std::vector<double> out;
  if (w.is_null()) {
    for (const auto& ref : in.references) out.push_back(pairwise_weight(in.target, ref, spec));
    return out;
  }
  if (!w.is_array() || w.size() != in.references.size())
    throw ConfigError("'weights' must be an array with one weight per reference cohort");
  for (const auto& e : w) {
    if (!e.is_number()) throw ConfigError("'weights' entries must be numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

json sample_json(const std::string& label, const OutcomeSample& s) {
  return {{"cohort", label}, {"n", s.size()}, {"successes", s.successes()}, {"mean", s.mean()}};
}

// ---- fit -----------------------------------------------------------------------

json run_fit(json& s, const std::optional<Dataset>& dataset) {
  const auto spec = parse_weight_spec(s.at("weight_spec"), "weight_spec");
  s["weight_spec"] = weight_spec_json(spec);
  const double level = check_level(get_double(s, "level"));
  const auto in = binomial_inputs(s, dataset);
  const auto weights = fixed_or_computed_weights(s, in, spec);
  const double p0 = get_opt_double(s, "p0").value_or(in.target.mean());
  if (!(p0 > 0.0 && p0 < 1.0)) throw ConfigError("'p0' must lie in (0, 1)");

  const auto cohorts = expfam::WeightedCohorts::target_and_references(in.target, in.references, weights);
  const auto family = expfam::Family::bernoulli();
  const auto fit = expfam::composite_mle(cohorts, family);

  json r;
  r["target"] = sample_json(in.target_label, in.target);
  json refs = json::array();
  for (std::size_t k = 0; k < in.references.size(); ++k) {
    json e = sample_json(in.reference_labels[k], in.references[k]);
    e["tau"] = mean_difference(in.target, in.references[k]);
    if (in.references[k].size() >= 2 && in.target.size() >= 2) {
      e["welch_p_value"] = welch_test(in.target, in.references[k]).p_value.value_or(1.0);
    }
    e["weight"] = weights[k];
    refs.push_back(e);
  }
  r["references"] = refs;
  if (weights.size() == 1) r["weight"] = weights.front();
  r["p_hat"] = fit.mu_hat;
  r["theta_hat"] = finite_or_null(fit.theta_hat);
  r["weighted_n"] = fit.weighted_n;
  r["boundary"] = fit.boundary;
  r["p0"] = p0;
  if (fit.boundary) {
    r["diagnostic"] = "estimate on the boundary of the parameter space; no variance or tests";
    return r;
  }
  const auto& info = *fit.information;
  r["H"] = info.H;
  r["J"] = info.J;
  r["G"] = info.G;
  r["variance"] = fit.variance;
  r["se"] = fit.standard_error();
  r["level"] = level;
  r["ci"] = interval_json(expfam::wald_ci(fit, level));
  r["clrt"] = test_json(expfam::clrt(cohorts, family, p0));
  r["wald"] = test_json(expfam::wald_test(fit, p0));
  return r;
}

// ---- glm -----------------------------------------------------------------------

struct GlmSetup {
  std::string target_cohort;
  std::vector<std::string> arms;
  std::vector<std::string> covariates;
  std::map<std::string, ArmWeights, std::less<>> weights;  // reference cohort -> arm -> w
  double level = 0.95;
};

GlmSetup glm_setup(json& s, const std::optional<Dataset>& dataset) {
  if (!dataset) throw ConfigError("this subcommand needs --data");
  GlmSetup g;
  const auto target = get_opt_string(s, "target_cohort");
  if (!target) throw ConfigError("'target_cohort' is required");
  g.target_cohort = *target;
  const auto cohorts = dataset->cohorts();
  if (std::find(cohorts.begin(), cohorts.end(), g.target_cohort) == cohorts.end())
    throw DataError("dataset has no cohort '" + g.target_cohort + "'");
  g.arms = get_opt_strings(s, "arms").value_or(dataset->arms_of(g.target_cohort));
  if (g.arms.empty()) throw ConfigError("'arms' is empty");
  g.covariates = get_opt_strings(s, "covariates").value_or(dataset->covariate_names);
  for (const auto& c : g.covariates) (void)dataset->covariate_index(c);
  g.level = check_level(get_double(s, "level"));
  s["arms"] = g.arms;
  s["covariates"] = g.covariates;

  const auto spec = parse_weight_spec(s.at("weight_spec"), "weight_spec");
  s["weight_spec"] = weight_spec_json(spec);
  const auto& ma = s.at("multiarm");
  MultiArmConfig mac;
  mac.option = parse_multiarm_option(ma.at("option").get<std::string>());
  mac.control_arm = ma.at("control_arm").is_null() ? g.arms.front() : ma.at("control_arm").get<std::string>();
  s["multiarm"]["control_arm"] = mac.control_arm;

  const auto& fixed = s.at("weights");
  for (const auto& cohort : cohorts) {
    if (cohort == g.target_cohort) continue;
    ArmWeights w;
    if (!fixed.is_null()) {
      if (!fixed.is_object()) throw ConfigError("'weights' must map arm labels to weights");
      for (const auto& arm : g.arms) {
        if (!fixed.contains(arm) || !fixed.at(arm).is_number())
          throw ConfigError("'weights' has no numeric entry for arm '" + arm + "'");
        w[arm] = fixed.at(arm).get<double>();
      }
      for (const auto& [k, v] : fixed.items()) {
        if (std::find(g.arms.begin(), g.arms.end(), k) == g.arms.end())
          throw ConfigError("'weights' names unknown arm '" + k + "'");
      }
    } else {
      ArmSamples t, r;
      for (const auto& arm : g.arms) {
        t.emplace(arm, sample_from_rows(*dataset, g.target_cohort, arm));
        r.emplace(arm, sample_from_rows(*dataset, cohort, arm));
      }
      w = multiarm_weights(t, r, mac, spec);
    }
    g.weights.emplace(cohort, std::move(w));
  }
  return g;
}

std::vector<glm::DesignRow> design_from_setup(const Dataset& ds, const GlmSetup& g) {
  return build_design(ds, g.target_cohort, g.arms, g.covariates,
                      [&](const std::string& cohort, const std::string& arm) {
                        return g.weights.at(cohort).at(arm);
                      });
}

json weights_json(const GlmSetup& g) {
  json j = json::object();
  for (const auto& [cohort, arms] : g.weights) {
    for (const auto& [arm, w] : arms) j[cohort][arm] = w;
  }
  return j;
}

glm::GlmFit converged_fit(std::span<const glm::DesignRow> rows) {
  auto fit = glm::fit_weighted_logistic(rows);
  if (!fit.converged) throw NumericalError("logistic fit did not converge: " + fit.diagnostic);
  return fit;
}

std::vector<glm::DesignRow> target_rows_of(const std::vector<glm::DesignRow>& rows) {
  std::vector<glm::DesignRow> out;
  for (const auto& r : rows)
    if (r.is_target) out.push_back(r);
  return out;
}

json run_glm(json& s, const std::optional<Dataset>& dataset) {
  const auto g = glm_setup(s, dataset);
  const bool with_clrt = get_bool(s, "clrt");
  const auto rows = design_from_setup(*dataset, g);
  const auto fit = converged_fit(rows);
  const auto names = design_names(g.arms, g.covariates);
  const auto coefs = glm::coef_inference(fit, g.level, names);

  json r;
  r["weights"] = weights_json(g);
  r["n_rows"] = rows.size();
  json cj = json::array();
  for (std::size_t j = 0; j < coefs.size(); ++j) {
    const auto& c = coefs[j];
    json e = {{"name", c.name}, {"estimate", c.estimate}, {"se", c.se},
              {"ci", interval_json(c.ci)}, {"z", c.z}, {"p_value", c.p_value}};
    if (with_clrt) {
      const auto t = glm::glm_clrt(rows, fit, {j}, Eigen::VectorXd::Zero(1));
      e["clrt"] = test_json(t);
    }
    cj.push_back(e);
  }
  r["coefficients"] = cj;

  const auto coding = glm::TreatmentCoding::control_first(g.arms, 1);
  const auto marg = glm::gcomp_marginals(fit, target_rows_of(rows), coding, g.arms, g.level);
  json rates = json::array();
  for (const auto& a : marg.rates)
    rates.push_back({{"arm", a.arm}, {"rate", a.rate}, {"se", a.se}, {"ci", interval_json(a.ci)}});
  json diffs = json::array();
  for (const auto& d : marg.differences) {
    diffs.push_back({{"arm", d.arm}, {"versus", d.versus}, {"difference", d.difference},
                     {"se", d.se}, {"ci", interval_json(d.ci)}, {"p_value", d.p_value}});
  }
  r["marginal_rates"] = rates;
  r["rate_differences"] = diffs;
  r["fit"] = {{"iterations", fit.iterations},
              {"converged", fit.converged},
              {"max_score_norm", fit.max_score_norm},
              {"loglik", fit.loglik}};
  return r;
}

// ---- sweeps --------------------------------------------------------------------

study::SweepConfig sweep_config(json& s) {
  study::SweepConfig c;
  const auto target = sample_from_spec(s.at("target"), "target");
  if (!s.at("target").contains("mean")) throw ConfigError("target.mean is required for sweeps");
  c.target_n = target.size();
  c.target_mean = get_double(s.at("target"), "mean");
  c.w1 = parse_weight_spec(s.at("w1"), "w1");
  c.w2 = parse_weight_spec(s.at("w2"), "w2");
  c.w3 = parse_weight_spec(s.at("w3"), "w3");
  s["w1"] = weight_spec_json(c.w1);
  s["w2"] = weight_spec_json(c.w2);
  s["w3"] = weight_spec_json(c.w3);
  const auto& npp = s.at("npp");
  c.include_npp = get_bool(npp, "enabled");
  c.npp.w_min = get_double(npp, "w_min");
  c.npp.w_max = get_double(npp, "w_max");
  c.npp.w_grid = get_size(npp, "w_grid");
  c.npp.credible_interval = false;
  c.p0 = get_opt_double(s, "p0");
  return c;
}

json sweep_summary(const std::vector<study::SweepRow>& rows, study::SweepAxis axis, double fraction,
                   bool include_npp) {
  std::vector<double> x;
  std::array<std::vector<double>, 4> y;
  std::size_t skipped = 0;
  for (const auto& row : rows) {
    if (row.skipped) {
      ++skipped;
      continue;
    }
    x.push_back(axis == study::SweepAxis::ReferenceMean ? row.tau : static_cast<double>(row.reference_n));
    for (std::size_t m = 0; m < 3; ++m) y[m].push_back(row.methods[m].weight);
    if (row.npp) y[3].push_back(row.npp->w_mean);
  }
  json j = {{"rows", rows.size()}, {"skipped", skipped}};
  if (axis == study::SweepAxis::ReferenceMean && x.size() >= 3) {
    json widths = json::object();
    const char* names[] = {"w1", "w2", "w3", "w_npp"};
    for (std::size_t m = 0; m < (include_npp ? 4u : 3u); ++m) {
      if (y[m].size() != x.size()) continue;
      widths[names[m]] = finite_or_null(study::peak_width(x, y[m], fraction));
    }
    j["peak_width"] = widths;
    j["width_fraction"] = fraction;
  }
  return j;
}

json run_sweep(json& s, study::SweepAxis axis, std::optional<std::string>& csv) {
  auto c = sweep_config(s);
  const double fraction = get_double(s, "width_fraction");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("'width_fraction' must lie in (0, 1)");
  std::vector<study::SweepRow> rows;
  if (axis == study::SweepAxis::ReferenceMean) {
    c.reference_n = get_size(s, "reference_n");
    c.tau_min = get_double(s, "tau_min");
    c.tau_max = get_double(s, "tau_max");
    c.points = get_size(s, "points");
    rows = study::sweep_reference_mean(c);
  } else {
    c.reference_mean = get_double(s, "reference_mean");
    const auto& sizes = s.at("reference_sizes");
    if (!sizes.is_array()) throw ConfigError("'reference_sizes' must be an array");
    c.reference_sizes.clear();
    for (const auto& e : sizes) {
      if (!e.is_number_integer() || e.get<long long>() < 1)
        throw ConfigError("'reference_sizes' entries must be positive integers");
      c.reference_sizes.push_back(e.get<std::size_t>());
    }
    rows = study::sweep_reference_size(c);
  }
  std::ostringstream os;
  study::write_sweep_csv(os, rows, axis);
  csv = os.str();
  json r = sweep_summary(rows, axis, fraction, c.include_npp);
  r["axis"] = axis == study::SweepAxis::ReferenceMean ? "tau" : "n_k";
  r["p0"] = c.p0.value_or(c.target_mean);
  json notes = json::array();
  for (const auto& row : rows)
    if (row.skipped) notes.push_back({{"index", row.index}, {"note", row.note}});
  r["skipped_rows"] = notes;
  return r;
}

// ---- npp -----------------------------------------------------------------------

npp::BinomialCounts counts_of(const OutcomeSample& s) { return {s.successes(), s.size()}; }

npp::BinomialCounts counts_from_spec(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k != "successes" && k != "trials") throw ConfigError("unknown key '" + path + "." + k + "'");
  }
  if (!j.contains("successes") || !j.contains("trials") || !j.at("successes").is_number_integer() ||
      !j.at("trials").is_number_integer() || j.at("successes").get<long long>() < 0)
    throw ConfigError(path + " needs integer 'successes' and 'trials'");
  npp::BinomialCounts c{j.at("successes").get<std::size_t>(), j.at("trials").get<std::size_t>()};
  c.validate();
  return c;
}

json run_npp(json& s, const std::optional<Dataset>& dataset) {
  npp::NppConfig cfg;
  cfg.w_min = get_double(s, "w_min");
  cfg.w_max = get_double(s, "w_max");
  cfg.w_grid = get_size(s, "w_grid");
  cfg.level = check_level(get_double(s, "level"));
  cfg.credible_interval = true;
  npp::BinomialCounts target, reference;
  if (!s.at("target").is_null() || !s.at("reference").is_null()) {
    if (s.at("target").is_null() || s.at("reference").is_null())
      throw ConfigError("'target' and 'reference' counts go together");
    target = counts_from_spec(s.at("target"), "target");
    reference = counts_from_spec(s.at("reference"), "reference");
  } else {
    if (!dataset) throw ConfigError("give 'target' and 'reference' counts or a dataset");
    const auto tc = get_opt_string(s, "target_cohort");
    if (!tc) throw ConfigError("'target_cohort' is required with a dataset");
    auto rc = get_opt_string(s, "reference_cohort");
    if (!rc) {
      std::vector<std::string> others;
      for (const auto& c : dataset->cohorts())
        if (c != *tc) others.push_back(c);
      if (others.size() != 1) throw ConfigError("set 'reference_cohort'; the dataset has several");
      rc = others.front();
      s["reference_cohort"] = *rc;
    }
    const auto arm = get_opt_string(s, "arm");
    if (!arm && dataset->arms().size() > 1) throw ConfigError("dataset has several arms; set 'arm'");
    target = counts_of(sample_from_rows(*dataset, *tc, arm));
    reference = counts_of(sample_from_rows(*dataset, *rc, arm));
  }
  const double p0 = get_opt_double(s, "p0").value_or(
      target.trials > 0 ? static_cast<double>(target.successes) / static_cast<double>(target.trials) : 0.5);
  const auto res = npp::npp_posterior(target, reference, cfg, p0);
  return {{"target", {{"successes", target.successes}, {"trials", target.trials}}},
          {"reference", {{"successes", reference.successes}, {"trials", reference.trials}}},
          {"p_mean", res.p_mean},
          {"w_mean", res.w_mean},
          {"level", cfg.level},
          {"credible_interval", interval_json(res.p_credible)},
          {"p0", p0},
          {"prob_le_p0", res.prob_le_p0},
          {"prob_gt_p0", res.prob_gt_p0}};
}

// ---- ess -----------------------------------------------------------------------

json ess_json(const study::EssResult& e) { return {{"ess", e.value}, {"negative", e.negative}}; }

json run_ess(json& s, const std::optional<Dataset>& dataset) {
  const auto model = s.at("model").get<std::string>();
  if (model == "binomial") {
    const auto spec = parse_weight_spec(s.at("weight_spec"), "weight_spec");
    s["weight_spec"] = weight_spec_json(spec);
    const auto in = binomial_inputs(s, dataset);
    const auto weights = fixed_or_computed_weights(s, in, spec);
    const auto family = expfam::Family::bernoulli();
    const auto alone = expfam::composite_mle(
        expfam::WeightedCohorts::target_and_references(in.target, in.references,
                                                       std::vector<double>(in.references.size(), 0.0)),
        family);
    const auto pooled = expfam::composite_mle(
        expfam::WeightedCohorts::target_and_references(in.target, in.references, weights), family);
    if (alone.boundary || pooled.boundary)
      throw NumericalError("estimate on the boundary; variances are undefined");
    json r = ess_json(study::ess(alone.variance, pooled.variance, in.target.size()));
    r["weights"] = weights;
    r["var_target_only"] = alone.variance;
    r["var_combined"] = pooled.variance;
    r["n_target"] = in.target.size();
    return r;
  }
  if (model == "glm") {
    const auto g = glm_setup(s, dataset);
    const auto rows = design_from_setup(*dataset, g);
    auto alone_rows = rows;
    for (auto& r : alone_rows)
      if (!r.is_target) r.weight = 0.0;
    const auto fit = converged_fit(rows);
    const auto alone = converged_fit(alone_rows);
    const auto names = design_names(g.arms, g.covariates);
    const auto n_target = target_rows_of(rows).size();
    json coefs = json::array();
    for (std::size_t j = 0; j < names.size(); ++j) {
      json e = ess_json(study::ess(alone.sandwich(j, j), fit.sandwich(j, j), n_target));
      e["name"] = names[j];
      e["var_target_only"] = alone.sandwich(j, j);
      e["var_combined"] = fit.sandwich(j, j);
      coefs.push_back(e);
    }
    return {{"weights", weights_json(g)}, {"n_target", n_target}, {"coefficients", coefs}};
  }
  throw ConfigError("'model' must be binomial or glm");
}

// ---- tipping -------------------------------------------------------------------

json run_tipping(json& s, const std::optional<Dataset>& dataset) {
  const auto& grid_cfg = s.at("grid");
  const auto grid = study::weight_grid(get_double(grid_cfg, "from"), get_double(grid_cfg, "to"),
                                       get_double(grid_cfg, "step"));
  const double alpha = get_double(s, "alpha");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("'alpha' must lie in (0, 1)");
  const auto model = s.at("model").get<std::string>();
  std::optional<study::TippingModel> tm;
  json extra;
  if (model == "binomial") {
    const auto in = binomial_inputs(s, dataset);
    const auto p0 = get_opt_double(s, "p0");
    if (!p0) throw ConfigError("'p0' is required for the binomial tipping scan");
    if (!(*p0 > 0.0 && *p0 < 1.0)) throw ConfigError("'p0' must lie in (0, 1)");
    tm = study::BinomialTippingModel{in.target, in.references, *p0};
    extra = {{"p0", *p0}};
  } else if (model == "glm") {
    const auto g = glm_setup(s, dataset);
    const auto names = design_names(g.arms, g.covariates);
    std::string coef = get_opt_string(s, "coefficient").value_or(names.size() > 1 ? names[1] : names[0]);
    const auto it = std::find(names.begin(), names.end(), coef);
    if (it == names.end()) throw ConfigError("'coefficient' names no model term: '" + coef + "'");
    s["coefficient"] = coef;
    study::GlmTippingModel gm;
    gm.rows = design_from_setup(*dataset, g);
    gm.coefficient = static_cast<std::size_t>(it - names.begin());
    const auto mode = s.at("mode").get<std::string>();
    if (mode == "uniform") {
      gm.mode = study::TippingMode::Uniform;
    } else if (mode == "per_arm") {
      gm.mode = study::TippingMode::PerArm;
      const auto arm = get_opt_string(s, "tipping_arm");
      if (!arm) throw ConfigError("'tipping_arm' is required in per_arm mode");
      gm.arm = *arm;
    } else {
      throw ConfigError("'mode' must be uniform or per_arm");
    }
    tm = std::move(gm);
    extra = {{"coefficient", coef}, {"base_weights", weights_json(g)}};
  } else {
    throw ConfigError("'model' must be binomial or glm");
  }
  const auto report = study::tipping_scan(*tm, grid, alpha);
  json rows = json::array();
  for (const auto& r : report.rows) {
    json e = {{"weight", r.weight}, {"failed", r.failed}};
    if (r.failed) {
      e["message"] = r.message;
    } else {
      e["p_value"] = r.p_value;
      e["reject"] = r.reject;
    }
    rows.push_back(e);
  }
  json flips = json::array();
  for (const auto& f : report.flips) {
    flips.push_back({{"weight_before", f.weight_before},
                     {"weight_after", f.weight_after},
                     {"reject_before", f.reject_before},
                     {"reject_after", f.reject_after}});
  }
  json r = {{"alpha", alpha}, {"rows", rows}, {"flips", flips}};
  r.update(extra);
  return r;
}

json envelope(const std::string& subcommand) {
  return {{"schema_version", kSchemaVersion},
          {"tool", {{"name", kToolName}, {"version", kToolVersion}}},
          {"subcommand", subcommand}};
}

Artifacts error_artifacts(const std::string& subcommand, int code, const std::string& kind,
                          const std::string& message) {
  json doc = envelope(subcommand);
  doc["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
  return {code, doc.dump(2) + "\n", std::nullopt};
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"fit",  "glm", "sweep-mean", "sweep-size",
                                                 "npp",  "ess", "tipping"};
  return names;
}

RunConfig resolve_config(const std::string& subcommand, const json& file_config,
                         const std::vector<std::string>& overrides) {
  RunConfig rc{subcommand, defaults_for(subcommand)};
  json patch = file_config.is_null() ? json::object() : file_config;
  if (!patch.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& o : overrides) apply_override(patch, o);
  merge_into(rc.settings, patch, "");
  return rc;
}

std::vector<std::string> design_names(const std::vector<std::string>& arms,
                                      const std::vector<std::string>& covariates) {
  std::vector<std::string> names = {"(Intercept)"};
  for (std::size_t a = 1; a < arms.size(); ++a) names.push_back("TRT[" + arms[a] + "]");
  names.insert(names.end(), covariates.begin(), covariates.end());
  return names;
}

std::vector<glm::DesignRow> build_design(const Dataset& dataset, const std::string& target_cohort,
                                         const std::vector<std::string>& arms,
                                         const std::vector<std::string>& covariates,
                                         const WeightLookup& weight_of) {
  if (arms.empty()) throw ConfigError("at least one arm is required");
  const auto coding = glm::TreatmentCoding::control_first(arms, 1);
  std::vector<std::size_t> cov_index;
  for (const auto& c : covariates) cov_index.push_back(dataset.covariate_index(c));
  const std::size_t p = arms.size() + covariates.size();
  std::vector<glm::DesignRow> rows;
  rows.reserve(dataset.rows.size());
  for (const auto& r : dataset.rows) {
    if (!coding.has_arm(r.arm)) {
      throw DataError("row of cohort '" + r.cohort + "' has arm '" + r.arm +
                      "', which is not among the model arms");
    }
    glm::DesignRow d;
    d.y = r.y;
    d.cohort = r.cohort;
    d.arm = r.arm;
    d.is_target = r.cohort == target_cohort;
    d.weight = d.is_target ? 1.0 : weight_of(r.cohort, r.arm);
    d.x.assign(p, 0.0);
    d.x[0] = 1.0;
    coding.apply(r.arm, d.x);
    for (std::size_t c = 0; c < cov_index.size(); ++c) d.x[arms.size() + c] = r.covariates[cov_index[c]];
    rows.push_back(std::move(d));
  }
  return rows;
}

Artifacts run(const RunConfig& config, const std::optional<Dataset>& dataset) {
  const auto& sub = config.subcommand;
  try {
    json settings = config.settings;
    std::optional<std::string> csv;
    json result;
    if (sub == "fit") {
      result = run_fit(settings, dataset);
    } else if (sub == "glm") {
      result = run_glm(settings, dataset);
    } else if (sub == "sweep-mean") {
      result = run_sweep(settings, study::SweepAxis::ReferenceMean, csv);
    } else if (sub == "sweep-size") {
      result = run_sweep(settings, study::SweepAxis::ReferenceSize, csv);
    } else if (sub == "npp") {
      result = run_npp(settings, dataset);
    } else if (sub == "ess") {
      result = run_ess(settings, dataset);
    } else if (sub == "tipping") {
      result = run_tipping(settings, dataset);
    } else {
      throw ConfigError("unknown subcommand '" + sub + "'");
    }
    json doc = envelope(sub);
    doc["config"] = settings;
    doc["result"] = result;
    return {kExitOk, doc.dump(2) + "\n", csv};
  } catch (const ConfigError& e) {
    return error_artifacts(sub, kExitConfig, "config", e.what());
  } catch (const json::exception& e) {
    return error_artifacts(sub, kExitConfig, "config", e.what());
  } catch (const DataError& e) {
    return error_artifacts(sub, kExitData, "data", e.what());
  } catch (const DomainError& e) {
    return error_artifacts(sub, kExitData, "domain", e.what());
  } catch (const NumericalError& e) {
    return error_artifacts(sub, kExitNumerical, "numerical", e.what());
  } catch (const std::exception& e) {
    return error_artifacts(sub, kExitInternal, "internal", e.what());
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Composite-likelihood borrowing of reference cohorts into a target cohort"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  std::string config_path, data_path, out_path, csv_path;
  std::vector<std::string> overrides;
  bool seed_given = false;
  const std::map<std::string, std::string> about = {
      {"fit", "binomial composite fit of one arm: weights, estimate, CI, CLRT and Wald tests"},
      {"glm", "weighted logistic regression with sandwich inference and g-computation rates"},
      {"sweep-mean", "weights, estimates and p-values as the reference mean varies"},
      {"sweep-size", "weights, estimates and p-values as the reference size varies"},
      {"npp", "normalized power prior posterior for one arm"},
      {"ess", "effective sample size of the borrowed information"},
      {"tipping", "decision at each borrowing weight and the weights where it flips"},
  };
  for (const auto& name : subcommands()) {
    auto* sc = app.add_subcommand(name, about.at(name));
    sc->add_option("--config", config_path, "JSON configuration file");
    sc->add_option("--data", data_path, "CSV dataset: cohort,arm,y,<covariates>");
    sc->add_option("--out", out_path, "write the JSON document here instead of stdout");
    sc->add_option("--csv", csv_path, "write the sweep table here");
    sc->add_option("--set", overrides, "override a setting: dotted.key=value")->take_all();
    sc->add_flag("--seed", seed_given, "rejected: every computation is deterministic");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  const auto emit = [&](const Artifacts& a) -> int {
    if (out_path.empty()) {
      std::cout << a.json;
    } else {
      std::ofstream out(out_path, std::ios::binary);
      out << a.json;
      if (!out) {
        std::cerr << "cannot write '" << out_path << "'\n";
        return kExitInternal;
      }
    }
    if (a.exit_code != kExitOk) {
      std::cerr << kToolName << ": " << json::parse(a.json)["error"]["message"].get<std::string>()
                << "\n";
    }
    if (a.csv && !csv_path.empty()) {
      std::ofstream out(csv_path, std::ios::binary);
      out << *a.csv;
      if (!out) {
        std::cerr << "cannot write '" << csv_path << "'\n";
        return kExitInternal;
      }
    }
    return a.exit_code;
  };

  if (seed_given) {
    return emit(error_artifacts(sub, kExitConfig, "config",
                                "--seed is not accepted: no computation in this tool is random"));
  }
  RunConfig rc;
  try {
    json file_config = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config '" + config_path + "'");
      try {
        file_config = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("config '" + config_path + "' is not valid JSON: " + e.what());
      }
    }
    rc = resolve_config(sub, file_config, overrides);
  } catch (const ConfigError& e) {
    return emit(error_artifacts(sub, kExitConfig, "config", e.what()));
  }
  std::optional<Dataset> dataset;
  if (!data_path.empty()) {
    try {
      dataset = parse_dataset_file(data_path);
    } catch (const DataError& e) {
      return emit(error_artifacts(sub, kExitData, "data", e.what()));
    }
  }
  return emit(run(rc, dataset));
}

}  // namespace clborrow::app
