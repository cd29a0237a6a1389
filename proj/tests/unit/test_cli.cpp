#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "clborrow/app/dataset.hpp"
#include "clborrow/app/run.hpp"
#include "clborrow/composite_glm.hpp"
#include "clborrow/error.hpp"
#include "synthetic.hpp"

using namespace clborrow;
using namespace clborrow::app;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Dataset parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_dataset(in, "test.csv");
}

std::string data_error(const std::string& text) {
  try {
    parse_text(text);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

Artifacts run_with(const std::string& sub, const json& cfg, const std::optional<Dataset>& ds = std::nullopt) {
  return run(resolve_config(sub, cfg), ds);
}

const std::filesystem::path kData = CLBORROW_DATA_DIR;

}  // namespace

TEST(Dataset, CrudeCountsFile) {
  const auto ds = parse_dataset_file(kData / "crude_counts.csv");
  EXPECT_EQ(ds.cohorts(), (std::vector<std::string>{"adult", "adolescent"}));
  EXPECT_EQ(ds.arms(), (std::vector<std::string>{"placebo", "low", "high"}));
  EXPECT_EQ(ds.arms_of("adolescent").size(), 3u);
  EXPECT_EQ(ds.rows.size(), 450u);
  EXPECT_TRUE(ds.covariate_names.empty());
}

TEST(Dataset, ShippedFilesMatchGenerator) {
  std::ostringstream counts, ad;
  serialize_dataset(counts, synth::crude_counts_dataset());
  serialize_dataset(ad, synth::ad_like_dataset());
  EXPECT_EQ(slurp(kData / "crude_counts.csv"), counts.str());
  EXPECT_EQ(slurp(kData / "ad_like.csv"), ad.str());
}

TEST(Dataset, SchemaErrors) {
  EXPECT_NE(data_error("cohort,arm,y\n").find("no data rows"), std::string::npos);
  EXPECT_NE(data_error("").find("missing header"), std::string::npos);
  const auto bad_y = data_error("cohort,arm,y\na,p,1\na,p,2\n");
  EXPECT_NE(bad_y.find("line 3"), std::string::npos);
  EXPECT_NE(bad_y.find("'y'"), std::string::npos);
  EXPECT_NE(data_error("cohort,arm,y,x,x\na,p,1,2,3\n").find("duplicate header"), std::string::npos);
  EXPECT_NE(data_error("arm,cohort,y\na,p,1\n").find("cohort,arm,y"), std::string::npos);
  const auto bad_num = data_error("cohort,arm,y,BASE\na,p,1,2.5\na,p,0,abc\n");
  EXPECT_NE(bad_num.find("line 3"), std::string::npos);
  EXPECT_NE(bad_num.find("'BASE'"), std::string::npos);
  EXPECT_NE(data_error("cohort,arm,y\na,p,1,4\n").find("expected 3 fields"), std::string::npos);
  EXPECT_THROW(parse_dataset_file(kData / "does-not-exist.csv"), DataError);
}

TEST(Dataset, RoundTrip) {
  for (const auto& ds : {synth::crude_counts_dataset(), synth::ad_like_dataset()}) {
    std::ostringstream os;
    serialize_dataset(os, ds);
    EXPECT_EQ(parse_text(os.str()), ds);
  }
  Dataset odd;
  odd.covariate_names = {"x"};
  odd.rows = {{"c", "a", 1, {0.1 + 0.2}}, {"c", "a", 0, {-1e-300}}, {"d", "b", 1, {123456789.123456789}}};
  std::ostringstream os;
  serialize_dataset(os, odd);
  EXPECT_EQ(parse_text(os.str()), odd);
}

TEST(Config, DefaultsOverridesAndUnknownKeys) {
  const auto rc = resolve_config("sweep-mean", json::object(), {"reference_n=100", "npp.enabled=false", "w3.shape_c=0.02"});
  EXPECT_EQ(rc.settings["reference_n"], 100);
  EXPECT_EQ(rc.settings["npp"]["enabled"], false);
  EXPECT_EQ(rc.settings["npp"]["w_grid"], 2001);
  EXPECT_EQ(rc.settings["w3"]["shape_c"], 0.02);
  EXPECT_THROW(resolve_config("sweep-mean", {{"bogus", 1}}), ConfigError);
  EXPECT_THROW(resolve_config("sweep-mean", json::object(), {"npp.bogus=1"}), ConfigError);
  EXPECT_THROW(resolve_config("fit", {{"weight_spec", {{"kind", "w1"}, {"zeta", 1}}}}), ConfigError);
  EXPECT_THROW(resolve_config("nope", json::object()), ConfigError);
  EXPECT_THROW(resolve_config("fit", json::object(), {"novalue"}), ConfigError);
  for (const auto& sub : subcommands()) EXPECT_NO_THROW(resolve_config(sub, json::object()));
}

TEST(Run, FitFixedPoint) {
  const auto a = run_with("fit", {{"target", {{"n", 300}, {"mean", 0.2}}}, {"references", {{{"n", 800}, {"mean", 0.2}}}}});
  ASSERT_EQ(a.exit_code, kExitOk) << a.json;
  const auto doc = json::parse(a.json);
  EXPECT_EQ(doc["schema_version"], kSchemaVersion);
  EXPECT_EQ(doc["tool"]["version"], kToolVersion);
  EXPECT_NEAR(doc["result"]["p_hat"].get<double>(), 0.2, 1e-15);
  EXPECT_EQ(doc["result"]["weight"], 0.8);
  EXPECT_NEAR(doc["result"]["se"].get<double>(), 0.012126, 1e-6);
  EXPECT_EQ(doc["config"]["weight_spec"]["c_upp"], 0.1);
  EXPECT_EQ(doc["config"]["level"], 0.95);
}

TEST(Run, FitFromDataset) {
  const auto ds = synth::crude_counts_dataset();
  const auto a = run_with("fit", {{"target_cohort", "adolescent"}, {"arm", "low"}}, ds);
  ASSERT_EQ(a.exit_code, kExitOk) << a.json;
  const auto r = json::parse(a.json)["result"];
  EXPECT_NEAR(r["weight"].get<double>(), 0.1735548, 5e-7);
  EXPECT_EQ(r["references"][0]["cohort"], "adult");
  EXPECT_EQ(r["target"]["successes"], 25);
  // Several arms and no arm chosen.
  EXPECT_EQ(run_with("fit", {{"target_cohort", "adolescent"}}, ds).exit_code, kExitConfig);
}

TEST(Run, GlmMatchesLibrary) {
  const auto ds = synth::ad_like_dataset();
  const json cfg = {{"target_cohort", "adolescent"},
                    {"weights", {{"placebo", 0.8}, {"low", 0.174}, {"high", 0.0}}}};
  const auto a = run_with("glm", cfg, ds);
  ASSERT_EQ(a.exit_code, kExitOk) << a.json;
  const auto r = json::parse(a.json)["result"];
  ASSERT_EQ(r["coefficients"].size(), 5u);
  ASSERT_EQ(r["marginal_rates"].size(), 3u);
  ASSERT_EQ(r["rate_differences"].size(), 2u);
  EXPECT_EQ(r["coefficients"][1]["name"], "TRT[low]");
  EXPECT_EQ(r["coefficients"][3]["name"], "BASE");

  const std::vector<std::string> arms = {"placebo", "low", "high"};
  const std::map<std::string, double> w = {{"placebo", 0.8}, {"low", 0.174}, {"high", 0.0}};
  const auto rows = build_design(ds, "adolescent", arms, {"BASE", "SEVERE"},
                                 [&](const std::string&, const std::string& arm) { return w.at(arm); });
  const auto fit = glm::fit_weighted_logistic(rows);
  const auto inf = glm::coef_inference(fit, 0.95);
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(r["coefficients"][j]["estimate"].get<double>(), inf[j].estimate);
    EXPECT_EQ(r["coefficients"][j]["p_value"].get<double>(), inf[j].p_value);
  }
}

TEST(Run, GlmComputedWeightsFromCrudeRates) {
  const auto a = run_with("glm", {{"target_cohort", "adolescent"}, {"covariates", json::array()}},
                          synth::crude_counts_dataset());
  ASSERT_EQ(a.exit_code, kExitOk) << a.json;
  const auto w = json::parse(a.json)["result"]["weights"]["adult"];
  EXPECT_EQ(w["placebo"], 0.8);
  EXPECT_NEAR(w["low"].get<double>(), 0.1735548, 5e-7);
  EXPECT_EQ(w["high"], 0.0);
}

TEST(Run, SweepMeanCsvContract) {
  const auto a = run_with("sweep-mean", json::object());
  ASSERT_EQ(a.exit_code, kExitOk) << a.json;
  ASSERT_TRUE(a.csv.has_value());
  std::istringstream in(*a.csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "tau,w1,w2,w3,w_npp,p_w1,p_w2,p_w3,p_npp,pval_w1,pval_w2,pval_w3,prob_npp");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.find("NA"), std::string::npos);
  }
  EXPECT_EQ(rows, 50u);
}

TEST(Run, OtherSubcommands) {
  const auto n = run_with("npp", {{"target", {{"successes", 60}, {"trials", 300}}},
                                  {"reference", {{"successes", 160}, {"trials", 800}}}});
  ASSERT_EQ(n.exit_code, kExitOk) << n.json;
  EXPECT_NEAR(json::parse(n.json)["result"]["p_mean"].get<double>(), 0.2, 0.005);

  const auto e = run_with("ess", {{"target", {{"n", 300}, {"mean", 0.2}}},
                                  {"references", {{{"n", 800}, {"mean", 0.2}}}}});
  ASSERT_EQ(e.exit_code, kExitOk) << e.json;
  EXPECT_NEAR(json::parse(e.json)["result"]["ess"].get<double>(), 788.2, 0.5);

  const auto eg = run_with("ess", {{"model", "glm"}, {"target_cohort", "adolescent"},
                                   {"weights", {{"placebo", 0.0}, {"low", 0.0}, {"high", 0.0}}}},
                           synth::ad_like_dataset());
  ASSERT_EQ(eg.exit_code, kExitOk) << eg.json;
  for (const auto& c : json::parse(eg.json)["result"]["coefficients"]) EXPECT_EQ(c["ess"], 0.0);

  const auto t = run_with("tipping", {{"target", {{"n", 40}, {"successes", 10}}},
                                      {"references", {{{"n", 80}, {"successes", 40}}}},
                                      {"p0", 0.25}});
  ASSERT_EQ(t.exit_code, kExitOk) << t.json;
  EXPECT_FALSE(json::parse(t.json)["result"]["flips"].empty());

  const auto s = run_with("sweep-size", {{"npp", {{"enabled", false}}}});
  ASSERT_EQ(s.exit_code, kExitOk) << s.json;
  EXPECT_EQ(s.csv->substr(0, 4), "n_k,");
}

TEST(Run, ExitCodeContract) {
  // Config: bad weight bounds.
  auto a = run_with("fit", {{"target", {{"n", 300}, {"mean", 0.2}}},
                            {"references", {{{"n", 800}, {"mean", 0.2}}}},
                            {"weight_spec", {{"kind", "w1"}, {"a", 0.9}}}});
  EXPECT_EQ(a.exit_code, kExitConfig);
  auto doc = json::parse(a.json);
  EXPECT_EQ(doc["error"]["kind"], "config");
  EXPECT_EQ(doc["error"]["exit_code"], 2);
  // Data: unknown cohort.
  a = run_with("glm", {{"target_cohort", "toddler"}}, synth::crude_counts_dataset());
  EXPECT_EQ(a.exit_code, kExitData);
  // Numerical: perfectly separated arms.
  Dataset sep;
  for (int i = 0; i < 20; ++i) sep.rows.push_back({"t", i < 10 ? "p" : "a", i < 10 ? 0 : 1, {}});
  for (int i = 0; i < 20; ++i) sep.rows.push_back({"r", i < 10 ? "p" : "a", i < 10 ? 0 : 1, {}});
  a = run_with("glm", {{"target_cohort", "t"}, {"weights", {{"p", 0.5}, {"a", 0.5}}}, {"clrt", false}}, sep);
  EXPECT_EQ(a.exit_code, kExitNumerical) << a.json;
  EXPECT_EQ(json::parse(a.json)["error"]["kind"], "numerical");
}

TEST(Run, Deterministic) {
  const auto ds = synth::ad_like_dataset();
  const json cfg = {{"target_cohort", "adolescent"}, {"weights", {{"placebo", 0.8}, {"low", 0.174}, {"high", 0.0}}}};
  EXPECT_EQ(run_with("glm", cfg, ds).json, run_with("glm", cfg, ds).json);
  const auto s1 = run_with("sweep-mean", {{"points", 9}}), s2 = run_with("sweep-mean", {{"points", 9}});
  EXPECT_EQ(s1.json, s2.json);
  EXPECT_EQ(s1.csv, s2.csv);
}

TEST(MainEntry, SeedIsRefusedAndOutputsWritten) {
  const auto dir = std::filesystem::temp_directory_path() / "clborrow_cli_test";
  std::filesystem::create_directories(dir);
  const auto out = (dir / "out.json").string();
  {
    std::vector<std::string> args = {"clborrow", "fit", "--seed", "--out", out};
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    EXPECT_EQ(main_entry(static_cast<int>(argv.size()), argv.data()), kExitConfig);
    EXPECT_NE(slurp(out).find("--seed"), std::string::npos);
  }
  {
    const auto csv = (dir / "sweep.csv").string();
    std::vector<std::string> args = {"clborrow", "sweep-mean", "--set", "points=5", "--set", "npp.enabled=false",
                                     "--out", out, "--csv", csv};
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    EXPECT_EQ(main_entry(static_cast<int>(argv.size()), argv.data()), kExitOk);
    EXPECT_EQ(json::parse(slurp(out))["config"]["points"], 5);
    const auto table = slurp(csv);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 6);
  }
  {
    std::vector<std::string> args = {"clborrow", "glm", "--data", (kData / "missing.csv").string(), "--out", out};
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    EXPECT_EQ(main_entry(static_cast<int>(argv.size()), argv.data()), kExitData);
  }
  std::filesystem::remove_all(dir);
}
