#pragma once

#include <span>
#include <vector>

#include "rdb/rdb_core.hpp"

namespace rdb {

/// Design for testing linear association with a continuous outcome.
struct ContinuousDesign {
  std::vector<std::string> component_ids;   // retained
  std::vector<std::vector<double>> props;   // m samples, each of length d
  std::vector<double> outcome;              // Y_j
  std::vector<std::pair<std::string, std::string>> excluded;

  std::size_t d() const { return component_ids.size(); }
  std::size_t m() const { return props.size(); }
};

/// Builds the design from a composition matrix and outcome column; all-zero
/// components are quarantined as in the two-sample case. Requires m >= 3 and
/// an outcome with positive variance.
ContinuousDesign make_continuous_design(const CompositionMatrix& p, std::span<const double> outcome);

/// Correlation-test statistics over the active set. Renormalization is per
/// sample here, unlike the two-sample case.
std::vector<double> correlation_stats(const ContinuousDesign& data,
                                      std::span<const std::size_t> active);

/// Iterative RDB with the correlation statistic substituted.
TestOutcome rdb_continuous(const ContinuousDesign& data, const RdbConfig& cfg);

}  // namespace rdb
