#include "rdb/error_control.hpp"

#include <algorithm>
#include <cmath>

namespace rdb {

double survival(FdrTail law, double t) {
  if (t < 0.0) throw ContractError("survival requires T >= 0");
  switch (law) {
    case FdrTail::Rayleigh:
      return std::exp(-0.5 * t * t);
    case FdrTail::HalfNormal:
      return std::erfc(t / std::sqrt(2.0));
  }
  throw ContractError("unknown tail law");
}

double fdr_threshold_search(std::size_t d, double alpha, double q_tilde,
                            std::span<const double> iter0_stats,
                            const std::function<std::size_t(double)>& rejected_count, FdrTail law) {
  std::vector<double> candidates;
  for (double s : iter0_stats) {
    const double a = std::fabs(s);
    if (std::isfinite(a) && a <= q_tilde) candidates.push_back(a);
  }
  candidates.push_back(q_tilde);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const double dd = static_cast<double>(d);
  for (double t : candidates) {
    const double tail = survival(law, t);
    // |I1_hat(T)| <= d, so candidates with survival above alpha can never
    // satisfy d * P(Z>T) <= alpha * |I1_hat(T)|.
    if (tail > alpha) continue;
    const std::size_t rejections = rejected_count(t);
    const double denom = static_cast<double>(std::max<std::size_t>(rejections, 1));
    if (dd * tail / denom <= alpha) return t;
  }
  return q_tilde;
}

double fdr_threshold(const TwoSampleDesign& design, const RdbConfig& cfg) {
  if (cfg.mode != Mode::Fdr) throw ContractError("fdr_threshold requires FDR mode");
  const std::size_t d = design.d();
  Thresholds thr = default_thresholds(d, cfg);
  StatsFn stats = [&design](std::span<const std::size_t> active) {
    return renormalized_stats(design, active);
  };
  std::vector<std::size_t> all(d);
  for (std::size_t i = 0; i < d; ++i) all[i] = i;
  std::vector<double> iter0 = stats(all);
  auto rejected = [&](double t) {
    Thresholds cand = thr;
    cand.d_plus = t;
    cand.d_minus = t;
    cand.d_pm = t + cfg.r_q * thr.median_band;
    TestOutcome run = run_iterative(d, design.component_ids, stats, cfg, cand);
    std::size_t n = 0;
    for (const auto& c : run.components) {
      if (c.decision == Decision::Rejected) ++n;
    }
    return n;
  };
  return fdr_threshold_search(d, cfg.alpha, thr.q_tilde, iter0, rejected, cfg.fdr_tail);
}

std::vector<double> bonferroni(std::span<const double> pvals) {
  std::vector<double> out;
  out.reserve(pvals.size());
  const double n = static_cast<double>(pvals.size());
  for (double p : pvals) {
    if (p < 0.0 || p > 1.0) throw ContractError("p-value outside [0,1]");
    out.push_back(std::min(1.0, n * p));
  }
  return out;
}

std::vector<double> bh_adjust(std::span<const double> pvals) {
  const std::size_t n = pvals.size();
  std::vector<double> out(n);
  if (n == 0) return out;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (pvals[i] < 0.0 || pvals[i] > 1.0) throw ContractError("p-value outside [0,1]");
    order[i] = i;
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  double running = 1.0;
  for (std::size_t r = n; r-- > 0;) {
    const double scaled = pvals[order[r]] * static_cast<double>(n) / static_cast<double>(r + 1);
    running = std::min(running, scaled);
    out[order[r]] = running;
  }
  return out;
}

}  // namespace rdb
