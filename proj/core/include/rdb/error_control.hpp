#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rdb/rdb_core.hpp"

namespace rdb {

/// P(Z > t) for the configured tail law: Rayleigh exp(-t^2/2) or
/// half-normal 2(1 - Phi(t)).
double survival(FdrTail law, double t);

/// BH-like threshold search over the observed first-iteration statistic
/// magnitudes. `rejected_count(T)` must run the full iterative procedure with
/// D+ = D- = T, D+- = T + r_Q M and return |I1_hat(T)|. Returns the smallest
/// qualifying candidate, or q_tilde when none qualifies.
double fdr_threshold_search(std::size_t d, double alpha, double q_tilde,
                            std::span<const double> iter0_stats,
                            const std::function<std::size_t(double)>& rejected_count, FdrTail law);

/// Convenience wrapper running the search on a two-sample design.
double fdr_threshold(const TwoSampleDesign& design, const RdbConfig& cfg);

std::vector<double> bonferroni(std::span<const double> pvals);
std::vector<double> bh_adjust(std::span<const double> pvals);

}  // namespace rdb
