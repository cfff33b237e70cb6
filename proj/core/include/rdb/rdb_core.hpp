#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdb/data_model.hpp"

namespace rdb {

enum class Mode { Fwer, Fdr };
enum class FdrTail { Rayleigh, HalfNormal };
enum class DirectionMode { TwoSided, NegOnly, PosOnly };
enum class Decision { Rejected, Retained, Excluded };

struct RdbConfig {
  double alpha = 0.1;
  std::optional<double> median_threshold;  // unset = sqrt(2 ln d / d)
  double r_q = 0.2;
  Mode mode = Mode::Fwer;
  FdrTail fdr_tail = FdrTail::Rayleigh;
  std::optional<std::string> group1_override;
};

struct Thresholds {
  double median_band;  // M
  double q_tilde;      // analytic upper bound sqrt(2 ln d - 2 ln alpha)
  double d_plus;
  double d_minus;
  double d_pm;
};

struct IterationRecord {
  DirectionMode direction;
  double median;
  Thresholds thresholds;
  std::vector<std::size_t> active;      // component indices (into retained set)
  std::vector<double> stats;            // aligned with `active`
  std::vector<std::size_t> rejected;    // subset of `active`
};

struct ComponentResult {
  std::string component_id;
  Decision decision;
  std::optional<std::size_t> rejection_iteration;
  std::optional<DirectionMode> direction;  // test mode at rejection
  double first_iteration_statistic = 0.0;
  std::string note;
};

struct BalanceSolverReport {
  int iterations = 0;
  double gradient_norm = 0.0;
  double balance_residual = 0.0;
};

struct TestOutcome {
  std::vector<ComponentResult> components;  // retained (input order), then excluded
  std::vector<IterationRecord> trace;
  RdbConfig config;
  Thresholds thresholds;
  std::size_t iterations = 0;  // T
  std::optional<double> fdr_threshold_used;
  std::optional<BalanceSolverReport> balance_group1;
  std::optional<BalanceSolverReport> balance_group2;

  std::vector<std::string> rejected_ids() const;
};

/// Renormalized two-sample t statistics over the active set. Per-sample
/// values are divided by the group-level sum of means over `active`.
std::vector<double> renormalized_stats(const TwoSampleDesign& design,
                                       std::span<const std::size_t> active);

/// Median with even-length midpoint rule.
double median_mid(std::vector<double> values);

DirectionMode decide_direction(double median, double band);

Thresholds default_thresholds(std::size_t d, const RdbConfig& cfg);

/// Indices (into `stats`) whose statistic crosses the relevant threshold.
std::vector<std::size_t> select_rejections(std::span<const double> stats, DirectionMode direction,
                                           const Thresholds& thr);

/// Statistic provider for one iteration: maps an active index set to the
/// vector of test statistics, aligned with the given indices.
using StatsFn = std::function<std::vector<double>(std::span<const std::size_t>)>;

/// The shared iterative engine: two-sample, weighted and continuous variants
/// all run through here with different StatsFn.
TestOutcome run_iterative(std::size_t d, const std::vector<std::string>& component_ids,
                          const StatsFn& stats, const RdbConfig& cfg, const Thresholds& thr);

/// Full RDB test on a two-sample design, including FDR threshold search when
/// cfg.mode == Fdr. Excluded components are appended to the outcome.
TestOutcome rdb_iterate(const TwoSampleDesign& design, const RdbConfig& cfg);

/// Runs cfg-mode resolution (FWER thresholds or FDR search) for an arbitrary
/// statistic provider; used by the weighted and continuous variants.
TestOutcome run_with_mode(std::size_t d, const std::vector<std::string>& component_ids,
                          const StatsFn& stats, const RdbConfig& cfg);

struct OracleResult {
  std::vector<std::size_t> reference;     // estimated I0
  std::vector<std::size_t> differential;  // estimated I1
  std::size_t iterations = 0;
  std::vector<double> first_iteration_diffs;
  double first_iteration_median = 0.0;
};

/// Exact noiseless recursion on population proportions Q1, Q2.
OracleResult rdb_oracle_noiseless(std::span<const double> q1, std::span<const double> q2);

}  // namespace rdb
