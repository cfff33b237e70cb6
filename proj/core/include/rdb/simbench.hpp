#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rdb/covariate_balance.hpp"
#include "rdb/rdb_core.hpp"

namespace rdb {

enum class ScenarioKind { PoissonGamma, PoissonGammaContinuous, LogNormal, LogNormalCov, Shuffle };

struct Scenario {
  ScenarioKind kind = ScenarioKind::PoissonGamma;
  std::size_t d = 200;
  std::size_t s = 20;
  std::size_t m1 = 50;
  std::size_t m2 = 50;  // ignored for the continuous case (m = m1)
  int setting = 1;      // effect-size setting 1 or 2
  double beta = 1.0;    // depth unbalance, group 2 depth divided by beta
  double rho = 0.0;     // AR(1) parameter for log-normal scenarios
  std::int64_t depth_min = 5000;
  std::int64_t depth_max = 50000;
  std::uint64_t seed = 0;
  std::optional<CountMatrix> source;  // Shuffle only
};

struct GroundTruth {
  std::vector<std::size_t> differential;  // planted I1, sorted
  std::vector<double> effect;             // a-vector, a_i = 1 off I1
};

struct SimData {
  CountMatrix counts;
  std::vector<std::string> labels;  // group per sample; empty for continuous
  std::vector<std::string> covariate_names;
  std::vector<std::vector<double>> covariates;  // covariates[c][j]
  std::optional<std::vector<double>> outcome;
  GroundTruth truth;
};

enum class Method { Rdb, RdbCal, WelchTssBonf, WelchTssBh, WilcoxonRaw, WilcoxonTss };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct MethodScore {
  double fwer = 0.0, fwer_se = 0.0;
  double fdr = 0.0, fdr_se = 0.0;
  std::optional<double> power, power_se;  // absent when s = 0
  std::size_t reps = 0;
  double mean_runtime_ms = 0.0;
};

struct PerformanceReport {
  Scenario scenario;
  std::vector<std::pair<Method, MethodScore>> scores;
};

/// Counted RNG streams keyed by (seed, replicate, role): any replicate is
/// replayable in isolation and results do not depend on execution order.
enum class StreamRole : std::uint64_t {
  Effects = 1,
  Abundance = 2,
  Depth = 3,
  Multinomial = 4,
  Covariates = 5,
  Labels = 6,
  Outcome = 7,
};
std::mt19937_64 keyed_stream(std::uint64_t seed, std::uint64_t replicate, StreamRole role);

GroundTruth gen_effect_sizes(std::size_t d, std::size_t s, int setting, std::mt19937_64& rng);

/// Stationary AR(1) path with unit marginal variance:
/// z_1 = eps_1, z_l = rho z_{l-1} + sqrt(1 - rho^2) eps_l, so that
/// corr(z_l1, z_l2) = rho^|l1-l2| exactly.
std::vector<double> ar1_path(std::size_t d, double rho, std::mt19937_64& rng);

/// One replicate of the configured scenario.
SimData generate_replicate(const Scenario& sc, std::uint64_t replicate);

/// Two-sided Welch p-values per component on total-sum-scaled proportions.
std::vector<double> welch_tss_pvalues(const CountMatrix& counts, const std::vector<std::string>& labels);

/// Two-sided Wilcoxon rank-sum p-values (normal approximation, tie
/// correction); `tss` selects proportions over raw counts.
std::vector<double> wilcoxon_pvalues(const CountMatrix& counts, const std::vector<std::string>& labels,
                                     bool tss);

PerformanceReport run_scenario(const Scenario& sc, const std::vector<Method>& methods,
                               std::size_t reps, const RdbConfig& cfg, unsigned threads = 1);

/// TSV serialization with a `#` provenance header. Runtime rows are opt-in
/// so that default reports are byte-deterministic for a fixed seed.
std::string report_to_tsv(const PerformanceReport& report, const std::string& provenance,
                          bool include_runtime = false);

std::string scenario_kind_name(ScenarioKind kind);

}  // namespace rdb
