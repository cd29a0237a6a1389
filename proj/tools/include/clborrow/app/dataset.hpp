#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace clborrow::app {

struct DatasetRow {
  std::string cohort;
  std::string arm;
  int y = 0;
  std::vector<double> covariates;

  friend bool operator==(const DatasetRow&, const DatasetRow&) = default;
};

/// Patient-level binary outcomes. CSV schema: `cohort,arm,y,<covariate...>`.
struct Dataset {
  std::vector<std::string> covariate_names;
  std::vector<DatasetRow> rows;

  /// Labels in order of first appearance.
  std::vector<std::string> cohorts() const;
  std::vector<std::string> arms() const;
  std::vector<std::string> arms_of(std::string_view cohort) const;
  std::size_t covariate_index(std::string_view name) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Throws DataError with row/column coordinates on any schema or parse failure.
Dataset parse_dataset(std::istream& in, std::string_view source = "<input>");
Dataset parse_dataset_file(const std::filesystem::path& path);

/// Writes the CSV schema; covariates use the shortest text that round-trips.
void serialize_dataset(std::ostream& out, const Dataset& dataset);

}  // namespace clborrow::app
