#include "rdb/continuous_outcome.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rdb {

ContinuousDesign make_continuous_design(const CompositionMatrix& p, std::span<const double> outcome) {
  if (outcome.size() != p.cols()) {
    throw ContractError("outcome covers " + std::to_string(outcome.size()) + " samples, matrix has " +
                        std::to_string(p.cols()));
  }
  if (p.cols() < 3) throw ContractError("continuous testing needs at least 3 samples");
  double mean = 0.0;
  for (double y : outcome) mean += y;
  mean /= static_cast<double>(outcome.size());
  double var = 0.0;
  for (double y : outcome) var += (y - mean) * (y - mean);
  if (var <= 0.0) throw ContractError("outcome has zero variance");

  ContinuousDesign design;
  design.outcome.assign(outcome.begin(), outcome.end());
  std::vector<std::size_t> retained;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) total += p.at(i, j);
    if (total == 0.0) {
      design.excluded.emplace_back(p.component_ids[i], "all-zero");
    } else {
      retained.push_back(i);
      design.component_ids.push_back(p.component_ids[i]);
    }
  }
  for (std::size_t j = 0; j < p.cols(); ++j) {
    std::vector<double> v(retained.size());
    for (std::size_t r = 0; r < retained.size(); ++r) v[r] = p.at(retained[r], j);
    design.props.push_back(std::move(v));
  }
  return design;
}

std::vector<double> correlation_stats(const ContinuousDesign& data,
                                      std::span<const std::size_t> active) {
  if (active.empty()) throw ContractError("active set is empty");
  const std::size_t m = data.m();
  if (m < 3) throw ContractError("continuous testing needs at least 3 samples");

  // Per-sample renormalization over the active set.
  std::vector<double> sums(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i : active) sums[j] += data.props[j][i];
    if (sums[j] <= 0.0) {
      throw ContractError("active set vanishes in sample " + std::to_string(j));
    }
  }

  const double ym = [&] {
    double acc = 0.0;
    for (double y : data.outcome) acc += y;
    return acc / static_cast<double>(m);
  }();
  double syy = 0.0;
  for (double y : data.outcome) syy += (y - ym) * (y - ym);

  std::vector<double> stats(active.size());
  const double df = static_cast<double>(m - 2);
  for (std::size_t r = 0; r < active.size(); ++r) {
    const std::size_t i = active[r];
    double xm = 0.0;
    for (std::size_t j = 0; j < m; ++j) xm += data.props[j][i] / sums[j];
    xm /= static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double dx = data.props[j][i] / sums[j] - xm;
      sxx += dx * dx;
      sxy += dx * (data.outcome[j] - ym);
    }
    if (sxx == 0.0) {
      stats[r] = 0.0;
      continue;
    }
    double rho = sxy / std::sqrt(sxx * syy);
    if (rho >= 1.0) {
      stats[r] = std::numeric_limits<double>::infinity();
    } else if (rho <= -1.0) {
      stats[r] = -std::numeric_limits<double>::infinity();
    } else {
      rho = std::clamp(rho, -(1.0 - 1e-12), 1.0 - 1e-12);
      stats[r] = rho * std::sqrt(df / (1.0 - rho * rho));
    }
  }
  return stats;
}

TestOutcome rdb_continuous(const ContinuousDesign& data, const RdbConfig& cfg) {
  StatsFn stats = [&data](std::span<const std::size_t> active) {
    return correlation_stats(data, active);
  };
  TestOutcome outcome = run_with_mode(data.d(), data.component_ids, stats, cfg);
  for (const auto& [id, reason] : data.excluded) {
    ComponentResult comp;
    comp.component_id = id;
    comp.decision = Decision::Excluded;
    comp.note = reason;
    outcome.components.push_back(std::move(comp));
  }
  return outcome;
}

}  // namespace rdb
