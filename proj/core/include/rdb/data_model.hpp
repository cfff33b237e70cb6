#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rdb/errors.hpp"

namespace rdb {

/// Raw count table, components (rows) x samples (columns).
struct CountMatrix {
  std::vector<std::string> component_ids;
  std::vector<std::string> sample_ids;
  std::vector<std::int64_t> counts;  // row-major, rows() x cols()

  std::size_t rows() const { return component_ids.size(); }
  std::size_t cols() const { return sample_ids.size(); }
  std::int64_t at(std::size_t i, std::size_t j) const { return counts[i * cols() + j]; }
  std::int64_t& at(std::size_t i, std::size_t j) { return counts[i * cols() + j]; }

  /// Validates invariants (non-negative entries, unique ids, >=1 component,
  /// >=2 samples) and throws ContractError on violation.
  void validate() const;
};

/// Per-sample proportions; every column sums to 1.
struct CompositionMatrix {
  std::vector<std::string> component_ids;
  std::vector<std::string> sample_ids;
  std::vector<double> props;  // row-major

  std::size_t rows() const { return component_ids.size(); }
  std::size_t cols() const { return sample_ids.size(); }
  double at(std::size_t i, std::size_t j) const { return props[i * cols() + j]; }
};

/// Sample annotations aligned 1:1 with a CountMatrix's sample ids.
struct SampleMetadata {
  std::vector<std::string> sample_ids;
  std::optional<std::vector<std::string>> group;  // exactly two observed levels
  std::vector<std::string> covariate_names;
  std::vector<std::vector<double>> covariates;  // covariates[c][j], aligned with sample_ids
  std::optional<std::vector<double>> outcome;
};

/// Two-group design on proportion vectors; degenerate components quarantined.
struct TwoSampleDesign {
  std::vector<std::string> component_ids;        // retained, in input order
  std::vector<std::vector<double>> group1;       // m1 samples, each of length d
  std::vector<std::vector<double>> group2;       // m2 samples
  std::vector<std::pair<std::string, std::string>> excluded;  // (component_id, reason)
  std::string group1_level;
  std::string group2_level;
  std::vector<std::size_t> group1_sample_index;  // positions in the source matrix
  std::vector<std::size_t> group2_sample_index;

  std::size_t d() const { return component_ids.size(); }
  std::size_t m1() const { return group1.size(); }
  std::size_t m2() const { return group2.size(); }
};

/// Parses the count TSV (first column component_id, remaining columns sample
/// ids, integer cells). Errors carry row/column locations.
CountMatrix load_counts(const std::string& path);

/// Parses a metadata TSV (first column sample_id, then named columns) and
/// extracts the requested columns.
SampleMetadata load_metadata(const std::string& path,
                             const std::optional<std::string>& group_column,
                             const std::vector<std::string>& covariate_columns,
                             const std::optional<std::string>& outcome_column);

/// Total-sum scaling. Errors on all-zero sample columns.
CompositionMatrix to_proportions(const CountMatrix& c);

/// Splits by the metadata group column. Group 1 is the lexicographically
/// first level unless overridden. Components with zero counts in every
/// sample of both groups are moved to `excluded` with reason "all-zero".
TwoSampleDesign split_groups(const CompositionMatrix& p, const SampleMetadata& meta,
                             const std::optional<std::string>& group1_override = std::nullopt);

/// As split_groups but with an explicit label vector (one label per sample).
TwoSampleDesign split_groups_by_labels(const CompositionMatrix& p,
                                       const std::vector<std::string>& labels,
                                       const std::optional<std::string>& group1_override = std::nullopt);

}  // namespace rdb
