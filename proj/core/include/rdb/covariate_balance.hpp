#pragma once

#include <span>
#include <vector>

#include "rdb/rdb_core.hpp"

namespace rdb {

/// Per-group calibration weights, each summing to 1.
struct BalanceWeights {
  std::vector<double> w1;
  std::vector<double> w2;
  BalanceSolverReport report1;
  BalanceSolverReport report2;
};

/// Exponential-tilting calibration: finds w_j proportional to
/// exp(lambda' (X_j - target)) so that sum_j w_j X_j = target. X is m x p,
/// row-major (rows[j] is one sample). Columns are expected to be
/// standardized by the caller; tolerance is 1e-6 per coordinate on the
/// balance residual and 1e-8 on the dual gradient.
std::vector<double> calibration_weights(const std::vector<std::vector<double>>& rows,
                                        std::span<const double> target,
                                        const std::vector<std::string>& names,
                                        BalanceSolverReport* report = nullptr);

/// Standardizes covariates over the pooled sample and calibrates both groups
/// to the pooled covariate mean. cov[c][j] indexes covariate c, sample j in
/// the matrix order; group membership comes from the design.
BalanceWeights balance_to_pooled_mean(const TwoSampleDesign& design,
                                      const std::vector<std::vector<double>>& covariates,
                                      const std::vector<std::string>& names);

/// Weighted renormalized statistics with the squared-weight variance form.
std::vector<double> weighted_stats(const TwoSampleDesign& design, const BalanceWeights& w,
                                   std::span<const std::size_t> active);

/// Full weighted RDB test: calibrate per-group weights against the pooled
/// covariate mean, then run the iterative procedure on weighted statistics.
/// With zero covariate columns the weights are uniform and the result matches
/// the unweighted test run on weighted statistics with w = 1/m.
TestOutcome rdb_weighted(const TwoSampleDesign& design,
                         const std::vector<std::vector<double>>& covariates,
                         const std::vector<std::string>& names, const RdbConfig& cfg);

/// Runs the weighted test with externally supplied weights (bypasses the
/// solver; weights are renormalized to sum to 1 per group).
TestOutcome rdb_weighted_with(const TwoSampleDesign& design, BalanceWeights weights,
                              const RdbConfig& cfg);

}  // namespace rdb
