#include "clborrow/app/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "clborrow/error.hpp"

namespace clborrow::app {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

[[noreturn]] void fail(std::string_view source, std::size_t line, std::string_view column,
                       const std::string& what) {
  std::ostringstream os;
  os << source << ": line " << line;
  if (!column.empty()) os << ", column '" << column << "'";
  os << ": " << what;
  throw DataError(os.str());
}

void append_unique(std::vector<std::string>& out, const std::string& v) {
  if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
}

}  // namespace

std::vector<std::string> Dataset::cohorts() const {
  std::vector<std::string> out;
  for (const auto& r : rows) append_unique(out, r.cohort);
  return out;
}

std::vector<std::string> Dataset::arms() const {
  std::vector<std::string> out;
  for (const auto& r : rows) append_unique(out, r.arm);
  return out;
}

std::vector<std::string> Dataset::arms_of(std::string_view cohort) const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (r.cohort == cohort) append_unique(out, r.arm);
  return out;
}

std::size_t Dataset::covariate_index(std::string_view name) const {
  const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
  if (it == covariate_names.end()) throw DataError("dataset has no covariate '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - covariate_names.begin());
}

Dataset parse_dataset(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    for (const auto cell : split(line)) header.emplace_back(cell);
    break;
  }
  if (header.empty()) fail(source, line_no, {}, "missing header row");
  if (header.size() < 3 || header[0] != "cohort" || header[1] != "arm" || header[2] != "y")
    fail(source, line_no, {}, "header must start with cohort,arm,y");
  std::set<std::string> seen;
  for (const auto& h : header) {
    if (h.empty()) fail(source, line_no, {}, "empty column name in header");
    if (!seen.insert(h).second) fail(source, line_no, h, "duplicate header");
  }

  Dataset ds;
  ds.covariate_names.assign(header.begin() + 3, header.end());
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      fail(source, line_no, {},
           "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    DatasetRow row;
    if (cells[0].empty()) fail(source, line_no, "cohort", "empty cohort label");
    if (cells[1].empty()) fail(source, line_no, "arm", "empty arm label");
    row.cohort = std::string(cells[0]);
    row.arm = std::string(cells[1]);
    if (cells[2] == "0") {
      row.y = 0;
    } else if (cells[2] == "1") {
      row.y = 1;
    } else {
      fail(source, line_no, "y", "response must be 0 or 1, got '" + std::string(cells[2]) + "'");
    }
    row.covariates.reserve(ds.covariate_names.size());
    for (std::size_t c = 3; c < cells.size(); ++c) {
      double v = 0.0;
      const auto cell = cells[c];
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        fail(source, line_no, header[c], "cannot parse '" + std::string(cell) + "' as a number");
      row.covariates.push_back(v);
    }
    ds.rows.push_back(std::move(row));
  }
  if (ds.rows.empty()) fail(source, line_no, {}, "no data rows");
  return ds;
}

Dataset parse_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  return parse_dataset(in, path.string());
}

void serialize_dataset(std::ostream& out, const Dataset& dataset) {
  out << "cohort,arm,y";
  for (const auto& name : dataset.covariate_names) out << ',' << name;
  out << '\n';
  char buf[32];
  for (const auto& r : dataset.rows) {
    out << r.cohort << ',' << r.arm << ',' << r.y;
    for (const double v : r.covariates) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

}  // namespace clborrow::app
