#include "rdb/rdb_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rdb/error_control.hpp"

namespace rdb {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kZeroTol = 1e-12;
}  // namespace

std::vector<std::string> TestOutcome::rejected_ids() const {
  std::vector<std::string> out;
  for (const auto& c : components) {
    if (c.decision == Decision::Rejected) out.push_back(c.component_id);
  }
  return out;
}

std::vector<double> renormalized_stats(const TwoSampleDesign& design,
                                       std::span<const std::size_t> active) {
  if (active.empty()) throw ContractError("active set is empty");
  const std::size_t m1 = design.m1();
  const std::size_t m2 = design.m2();

  auto group_stats = [&](const std::vector<std::vector<double>>& samples, std::size_t m,
                         std::vector<double>& means, double& sum) {
    means.resize(active.size());
    sum = 0.0;
    for (std::size_t r = 0; r < active.size(); ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += samples[j][active[r]];
      means[r] = acc / static_cast<double>(m);
      sum += means[r];
    }
  };
  std::vector<double> mean1, mean2;
  double s1 = 0.0, s2 = 0.0;
  group_stats(design.group1, m1, mean1, s1);
  group_stats(design.group2, m2, mean2, s2);
  if (s1 <= 0.0) throw ContractError("active set vanishes in group 1");
  if (s2 <= 0.0) throw ContractError("active set vanishes in group 2");

  std::vector<double> stats(active.size());
  for (std::size_t r = 0; r < active.size(); ++r) {
    const std::size_t i = active[r];
    const double num = mean1[r] / s1 - mean2[r] / s2;
    double var1 = 0.0, var2 = 0.0;
    for (std::size_t j = 0; j < m1; ++j) {
      const double dev = design.group1[j][i] / s1 - mean1[r] / s1;
      var1 += dev * dev;
    }
    var1 /= static_cast<double>(m1 - 1);
    for (std::size_t j = 0; j < m2; ++j) {
      const double dev = design.group2[j][i] / s2 - mean2[r] / s2;
      var2 += dev * dev;
    }
    var2 /= static_cast<double>(m2 - 1);
    const double se2 = var1 / static_cast<double>(m1) + var2 / static_cast<double>(m2);
    if (se2 == 0.0) {
      stats[r] = (num == 0.0) ? 0.0 : (num > 0.0 ? kInf : -kInf);
    } else {
      stats[r] = num / std::sqrt(se2);
    }
  }
  return stats;
}

double median_mid(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of empty vector");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  const double lo = values[n / 2 - 1];
  const double hi = values[n / 2];
  if (std::isinf(lo) && std::isinf(hi) && lo != hi) return 0.0;
  return 0.5 * (lo + hi);
}

DirectionMode decide_direction(double median, double band) {
  if (median >= band) return DirectionMode::NegOnly;
  if (median <= -band) return DirectionMode::PosOnly;
  return DirectionMode::TwoSided;
}

Thresholds default_thresholds(std::size_t d, const RdbConfig& cfg) {
  if (d < 2) throw ContractError("need at least 2 retained components");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ContractError("alpha must be in (0,1)");
  Thresholds thr;
  const double dd = static_cast<double>(d);
  thr.median_band = cfg.median_threshold ? *cfg.median_threshold : std::sqrt(2.0 * std::log(dd) / dd);
  thr.q_tilde = std::sqrt(2.0 * std::log(dd) - 2.0 * std::log(cfg.alpha));
  thr.d_plus = thr.q_tilde;
  thr.d_minus = thr.q_tilde;
  thr.d_pm = thr.q_tilde + cfg.r_q * thr.median_band;
  return thr;
}

std::vector<std::size_t> select_rejections(std::span<const double> stats, DirectionMode direction,
                                           const Thresholds& thr) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < stats.size(); ++r) {
    const double s = stats[r];
    bool hit = false;
    switch (direction) {
      case DirectionMode::TwoSided: hit = std::fabs(s) > thr.d_pm; break;
      case DirectionMode::NegOnly: hit = s < -thr.d_minus; break;
      case DirectionMode::PosOnly: hit = s > thr.d_plus; break;
    }
    if (hit) out.push_back(r);
  }
  return out;
}

TestOutcome run_iterative(std::size_t d, const std::vector<std::string>& component_ids,
                          const StatsFn& stats, const RdbConfig& cfg, const Thresholds& thr) {
  TestOutcome outcome;
  outcome.config = cfg;
  outcome.thresholds = thr;
  outcome.components.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    outcome.components[i].component_id = component_ids[i];
    outcome.components[i].decision = Decision::Retained;
  }

  std::vector<std::size_t> active(d);
  std::iota(active.begin(), active.end(), 0);

  for (std::size_t t = 0; t <= d && !active.empty(); ++t) {
    std::vector<double> values = stats(active);
    IterationRecord rec;
    rec.thresholds = thr;
    rec.active = active;
    rec.stats = values;
    rec.median = median_mid(values);
    rec.direction = decide_direction(rec.median, thr.median_band);
    std::vector<std::size_t> local = select_rejections(values, rec.direction, thr);
    for (std::size_t r : local) rec.rejected.push_back(active[r]);

    if (t == 0) {
      for (std::size_t r = 0; r < active.size(); ++r) {
        outcome.components[active[r]].first_iteration_statistic = values[r];
      }
    }
    for (std::size_t idx : rec.rejected) {
      auto& comp = outcome.components[idx];
      comp.decision = Decision::Rejected;
      comp.rejection_iteration = t;
      comp.direction = rec.direction;
    }
    const bool stop = rec.rejected.empty();
    if (!stop) {
      std::vector<std::size_t> next;
      std::size_t r = 0;
      for (std::size_t idx : active) {
        if (r < rec.rejected.size() && rec.rejected[r] == idx) {
          ++r;
        } else {
          next.push_back(idx);
        }
      }
      active = std::move(next);
    }
    outcome.trace.push_back(std::move(rec));
    outcome.iterations = t + 1;
    if (stop) break;
  }
  return outcome;
}

TestOutcome run_with_mode(std::size_t d, const std::vector<std::string>& component_ids,
                          const StatsFn& stats, const RdbConfig& cfg) {
  Thresholds thr = default_thresholds(d, cfg);
  std::optional<double> t_hat;
  if (cfg.mode == Mode::Fdr) {
    std::vector<std::size_t> all(d);
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> iter0 = stats(all);
    auto rejected_count = [&](double t) {
      Thresholds cand = thr;
      cand.d_plus = t;
      cand.d_minus = t;
      cand.d_pm = t + cfg.r_q * thr.median_band;
      TestOutcome run = run_iterative(d, component_ids, stats, cfg, cand);
      std::size_t n = 0;
      for (const auto& c : run.components) {
        if (c.decision == Decision::Rejected) ++n;
      }
      return n;
    };
    t_hat = fdr_threshold_search(d, cfg.alpha, thr.q_tilde, iter0, rejected_count, cfg.fdr_tail);
    thr.d_plus = *t_hat;
    thr.d_minus = *t_hat;
    thr.d_pm = *t_hat + cfg.r_q * thr.median_band;
  }
  TestOutcome outcome = run_iterative(d, component_ids, stats, cfg, thr);
  outcome.fdr_threshold_used = t_hat;
  return outcome;
}

TestOutcome rdb_iterate(const TwoSampleDesign& design, const RdbConfig& cfg) {
  if (design.d() < 2) throw ContractError("fewer than 2 retained components");
  StatsFn stats = [&design](std::span<const std::size_t> active) {
    return renormalized_stats(design, active);
  };
  TestOutcome outcome = run_with_mode(design.d(), design.component_ids, stats, cfg);
  for (const auto& [id, reason] : design.excluded) {
    ComponentResult comp;
    comp.component_id = id;
    comp.decision = Decision::Excluded;
    comp.note = reason;
    outcome.components.push_back(std::move(comp));
  }
  return outcome;
}

OracleResult rdb_oracle_noiseless(std::span<const double> q1, std::span<const double> q2) {
  if (q1.size() != q2.size() || q1.empty()) throw ContractError("Q1 and Q2 must have equal positive length");
  double sum1 = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < q1.size(); ++i) {
    if (q1[i] < 0.0 || q2[i] < 0.0) throw ContractError("proportions must be non-negative");
    if (q1[i] + q2[i] <= 0.0) {
      throw ContractError("component " + std::to_string(i) + " vanishes in both populations");
    }
    sum1 += q1[i];
    sum2 += q2[i];
  }
  if (std::fabs(sum1 - 1.0) > 1e-9 || std::fabs(sum2 - 1.0) > 1e-9) {
    throw ContractError("Q1 and Q2 must lie on the simplex");
  }

  OracleResult res;
  std::vector<std::size_t> active(q1.size());
  std::iota(active.begin(), active.end(), 0);
  std::vector<std::size_t> rejected;

  for (std::size_t t = 0; t <= q1.size() && !active.empty(); ++t) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i : active) {
      s1 += q1[i];
      s2 += q2[i];
    }
    std::vector<double> diffs(active.size());
    for (std::size_t r = 0; r < active.size(); ++r) {
      diffs[r] = q1[active[r]] / s1 - q2[active[r]] / s2;
    }
    const double med = median_mid(diffs);
    if (t == 0) {
      res.first_iteration_diffs = diffs;
      res.first_iteration_median = med;
    }
    std::vector<std::size_t> w;
    for (std::size_t r = 0; r < active.size(); ++r) {
      const double v = diffs[r];
      const bool is_zero = std::fabs(v) <= kZeroTol;
      bool reject = false;
      if (std::fabs(med) <= kZeroTol) {
        reject = !is_zero;  // both strict signs
      } else if (med > 0.0) {
        reject = is_zero || v < 0.0;  // negatives and zeros
      } else {
        reject = is_zero || v > 0.0;  // positives and zeros
      }
      if (reject) w.push_back(r);
    }
    res.iterations = t + 1;
    if (w.empty()) break;
    std::vector<std::size_t> next;
    std::size_t r = 0;
    for (std::size_t pos = 0; pos < active.size(); ++pos) {
      if (r < w.size() && w[r] == pos) {
        rejected.push_back(active[pos]);
        ++r;
      } else {
        next.push_back(active[pos]);
      }
    }
    active = std::move(next);
  }
  std::sort(rejected.begin(), rejected.end());
  res.reference = active;
  res.differential = rejected;
  return res;
}

}  // namespace rdb
