#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clborrow/app/dataset.hpp"
#include "clborrow/composite_glm.hpp"

namespace clborrow::app {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolName = "clborrow";
inline constexpr const char* kToolVersion = "0.3.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

/// Subcommands: fit, glm, sweep-mean, sweep-size, npp, ess, tipping.
const std::vector<std::string>& subcommands();

struct RunConfig {
  std::string subcommand;
  /// Fully resolved settings (defaults merged, overrides applied, validated keys).
  nlohmann::json settings = nlohmann::json::object();
};

/// Merges `file_config` and `overrides` (`dotted.key=value`; value parsed as JSON
/// when possible, else taken as a string) onto the subcommand defaults.
/// Throws ConfigError on unknown subcommands or keys.
RunConfig resolve_config(const std::string& subcommand, const nlohmann::json& file_config,
                         const std::vector<std::string>& overrides = {});

struct Artifacts {
  int exit_code = kExitOk;
  std::string json;                ///< result or error document
  std::optional<std::string> csv;  ///< sweep tables
};

/// Dispatches the subcommand. Never throws: errors become an error document
/// and a nonzero exit code.
Artifacts run(const RunConfig& config, const std::optional<Dataset>& dataset);

/// Borrowing weight of a reference (cohort, arm) block.
using WeightLookup = std::function<double(const std::string& cohort, const std::string& arm)>;

/// Design rows for a (composite) logistic model: intercept, one indicator per
/// non-control arm (arms[0] is the control), then the named covariates.
/// Reference rows take `weight_of(cohort, arm)`; target rows take weight 1.
std::vector<glm::DesignRow> build_design(const Dataset& dataset, const std::string& target_cohort,
                                         const std::vector<std::string>& arms,
                                         const std::vector<std::string>& covariates,
                                         const WeightLookup& weight_of);

/// Coefficient names matching build_design's column order.
std::vector<std::string> design_names(const std::vector<std::string>& arms,
                                      const std::vector<std::string>& covariates);

/// argv-level entry point used by the executable.
int main_entry(int argc, char** argv);

}  // namespace clborrow::app
