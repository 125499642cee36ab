#pragma once

#include "aggbounds/core.hpp"
#include "aggbounds/inference.hpp"
#include "aggbounds/simlab.hpp"

#include "json.hpp"

#include <string>
#include <vector>

// File formats: CSV ingestion for published aggregate tables, JSON for
// datasets, simulation specs, and emitted reports. All CSV is UTF-8 with a
// header row, comma separators, and '.' decimals.

namespace aggbounds::io {

using json = nlohmann::json;

// Parsed CSV: lowercased header names plus string cells, one row per record.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;           // -1 when absent
  int require_column(const std::string& name) const;   // throws ValidationError
};

CsvTable read_csv(const std::string& path);

// support.csv: point_id, <one column per covariate>. Returns the support plus
// the covariate column names (used to resolve the `covariate` field in other
// files, which may also be a 0-based index).
struct SupportFile {
  CovariateSupport support;
  std::vector<std::string> covariate_names;

  int covariate_index(const std::string& token) const;  // -1 when unknown
};

SupportFile read_support_csv(const std::string& path);

// groups.csv (group_id, count, y_mean[, y_se]) + marginals.csv (group_id,
// covariate, value, prob) + optional finer.csv (group_id, covariate, value,
// y_mean[, y_se][, count]). Shares are derived from the counts. Parse and
// cross-reference problems throw ValidationError naming the file, group, and
// covariate; the structural validate() pass is left to the caller.
AggregateDataset read_dataset_csv(const std::string& support_path,
                                  const std::string& groups_path,
                                  const std::string& marginals_path,
                                  const std::string& finer_path, OutcomeRange range,
                                  bool binary_outcome);

json dataset_to_json(const AggregateDataset& ds);
AggregateDataset dataset_from_json(const json& j);

json spec_to_json(const sim::JointSpec& spec);
sim::JointSpec spec_from_json(const json& j);

// Report emission. CSV numbers are printed with round-trip precision so the
// files are both plot-ready and exact.
json bounds_to_json(const BoundResult& result, bool include_witnesses);
std::string bounds_to_csv(const BoundResult& result);

json confidence_to_json(const inference::ConfidenceReport& report);
std::string intervals_to_csv(const std::vector<inference::MarginalInterval>& intervals);

std::string format_double(double v);  // shortest exact decimal

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace aggbounds::io
