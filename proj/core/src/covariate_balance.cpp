#include "rdb/covariate_balance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rdb {

namespace {

constexpr double kGradTol = 1e-8;
constexpr int kMaxNewton = 100;

double log_sum_exp(const Eigen::VectorXd& a) {
  const double amax = a.maxCoeff();
  return amax + std::log((a.array() - amax).exp().sum());
}

}  // namespace

std::vector<double> calibration_weights(const std::vector<std::vector<double>>& rows,
                                        std::span<const double> target,
                                        const std::vector<std::string>& names,
                                        BalanceSolverReport* report) {
  const std::size_t m = rows.size();
  const std::size_t p = target.size();
  if (m == 0) throw ContractError("calibration needs at least one sample");
  if (p == 0) {
    if (report) *report = BalanceSolverReport{};
    return std::vector<double>(m, 1.0 / static_cast<double>(m));
  }

  Eigen::MatrixXd c(m, p);  // X_j - target
  for (std::size_t j = 0; j < m; ++j) {
    if (rows[j].size() != p) throw ContractError("covariate row length mismatch");
    for (std::size_t k = 0; k < p; ++k) c(j, k) = rows[j][k] - target[k];
  }

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd w(m);
  Eigen::VectorXd grad(p);
  double g_value = log_sum_exp(c * lambda);
  int iter = 0;
  for (;; ++iter) {
    Eigen::VectorXd a = c * lambda;
    const double amax = a.maxCoeff();
    w = (a.array() - amax).exp();
    w /= w.sum();
    grad = c.transpose() * w;
    if (grad.lpNorm<Eigen::Infinity>() <= kGradTol) break;
    if (iter >= kMaxNewton) {
      Eigen::Index worst = 0;
      grad.cwiseAbs().maxCoeff(&worst);
      const std::string name =
          static_cast<std::size_t>(worst) < names.size() ? names[worst] : std::to_string(worst);
      throw ContractError("calibration failed to converge: target may lie outside the convex hull; "
                          "worst-balanced covariate is \"" + name + "\"");
    }
    Eigen::MatrixXd hess = c.transpose() * w.asDiagonal() * c - grad * grad.transpose();
    Eigen::VectorXd step = hess.ldlt().solve(-grad);
    if (!step.allFinite() || grad.dot(step) >= 0.0) step = -grad;

    // Backtracking line search on the dual objective.
    double s = 1.0;
    const double slope = grad.dot(step);
    double next = log_sum_exp(c * (lambda + s * step));
    while (next > g_value + 1e-4 * s * slope && s > 1e-14) {
      s *= 0.5;
      next = log_sum_exp(c * (lambda + s * step));
    }
    lambda += s * step;
    g_value = next;
  }

  if (report) {
    report->iterations = iter;
    report->gradient_norm = grad.lpNorm<Eigen::Infinity>();
    report->balance_residual = report->gradient_norm;
  }
  std::vector<double> out(m);
  for (std::size_t j = 0; j < m; ++j) out[j] = w(static_cast<Eigen::Index>(j));
  return out;
}

BalanceWeights balance_to_pooled_mean(const TwoSampleDesign& design,
                                      const std::vector<std::vector<double>>& covariates,
                                      const std::vector<std::string>& names) {
  const std::size_t n = design.m1() + design.m2();
  for (const auto& col : covariates) {
    if (col.size() != n) {
      throw ContractError("covariate column covers " + std::to_string(col.size()) +
                          " samples, design has " + std::to_string(n));
    }
  }

  // Standardize over the pooled sample; constant columns impose no
  // constraint and are dropped.
  std::vector<std::vector<double>> std_cols;
  std::vector<std::string> kept_names;
  for (std::size_t cidx = 0; cidx < covariates.size(); ++cidx) {
    const auto& col = covariates[cidx];
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    if (var <= 1e-24) continue;
    const double sd = std::sqrt(var);
    std::vector<double> z(n);
    for (std::size_t j = 0; j < n; ++j) z[j] = (col[j] - mean) / sd;
    std_cols.push_back(std::move(z));
    kept_names.push_back(cidx < names.size() ? names[cidx] : std::to_string(cidx));
  }
  const std::size_t p = std_cols.size();

  if (p > 1) {
    Eigen::MatrixXd x(n, p);
    for (std::size_t k = 0; k < p; ++k) {
      for (std::size_t j = 0; j < n; ++j) x(j, k) = std_cols[k][j];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (static_cast<std::size_t>(qr.rank()) < p) {
      std::string cols;
      const auto perm = qr.colsPermutation().indices();
      for (Eigen::Index k = qr.rank(); k < static_cast<Eigen::Index>(p); ++k) {
        if (!cols.empty()) cols += ", ";
        cols += kept_names[perm(k)];
      }
      throw ContractError("collinear covariate columns: " + cols);
    }
  }

  auto group_rows = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::vector<double>> rows;
    for (std::size_t j : idx) {
      std::vector<double> row(p);
      for (std::size_t k = 0; k < p; ++k) row[k] = std_cols[k][j];
      rows.push_back(std::move(row));
    }
    return rows;
  };
  const std::vector<double> target(p, 0.0);  // pooled mean in standardized coordinates
  BalanceWeights bw;
  bw.w1 = calibration_weights(group_rows(design.group1_sample_index), target, kept_names, &bw.report1);
  bw.w2 = calibration_weights(group_rows(design.group2_sample_index), target, kept_names, &bw.report2);
  return bw;
}

std::vector<double> weighted_stats(const TwoSampleDesign& design, const BalanceWeights& w,
                                   std::span<const std::size_t> active) {
  if (active.empty()) throw ContractError("active set is empty");
  if (w.w1.size() != design.m1() || w.w2.size() != design.m2()) {
    throw ContractError("weight vector length does not match group size");
  }

  auto group_means = [&](const std::vector<std::vector<double>>& samples,
                         const std::vector<double>& wk, std::vector<double>& means, double& sum) {
    means.resize(active.size());
    sum = 0.0;
    for (std::size_t r = 0; r < active.size(); ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < samples.size(); ++j) acc += wk[j] * samples[j][active[r]];
      means[r] = acc;
      sum += acc;
    }
  };
  std::vector<double> mean1, mean2;
  double s1 = 0.0, s2 = 0.0;
  group_means(design.group1, w.w1, mean1, s1);
  group_means(design.group2, w.w2, mean2, s2);
  if (s1 <= 0.0) throw ContractError("active set vanishes in group 1");
  if (s2 <= 0.0) throw ContractError("active set vanishes in group 2");

  std::vector<double> stats(active.size());
  for (std::size_t r = 0; r < active.size(); ++r) {
    const std::size_t i = active[r];
    const double num = mean1[r] / s1 - mean2[r] / s2;
    double v = 0.0;
    for (std::size_t j = 0; j < design.m1(); ++j) {
      const double dev = design.group1[j][i] / s1 - mean1[r] / s1;
      v += w.w1[j] * w.w1[j] * dev * dev;
    }
    for (std::size_t j = 0; j < design.m2(); ++j) {
      const double dev = design.group2[j][i] / s2 - mean2[r] / s2;
      v += w.w2[j] * w.w2[j] * dev * dev;
    }
    if (v == 0.0) {
      stats[r] = (num == 0.0) ? 0.0
                              : (num > 0.0 ? std::numeric_limits<double>::infinity()
                                           : -std::numeric_limits<double>::infinity());
    } else {
      stats[r] = num / std::sqrt(v);
    }
  }
  return stats;
}

TestOutcome rdb_weighted_with(const TwoSampleDesign& design, BalanceWeights weights,
                              const RdbConfig& cfg) {
  for (auto* wk : {&weights.w1, &weights.w2}) {
    double total = 0.0;
    for (double v : *wk) {
      if (v <= 0.0) throw ContractError("weights must be strictly positive");
      total += v;
    }
    for (double& v : *wk) v /= total;
  }
  StatsFn stats = [&design, &weights](std::span<const std::size_t> active) {
    return weighted_stats(design, weights, active);
  };
  TestOutcome outcome = run_with_mode(design.d(), design.component_ids, stats, cfg);
  outcome.balance_group1 = weights.report1;
  outcome.balance_group2 = weights.report2;
  for (const auto& [id, reason] : design.excluded) {
    ComponentResult comp;
    comp.component_id = id;
    comp.decision = Decision::Excluded;
    comp.note = reason;
    outcome.components.push_back(std::move(comp));
  }
  return outcome;
}

TestOutcome rdb_weighted(const TwoSampleDesign& design,
                         const std::vector<std::vector<double>>& covariates,
                         const std::vector<std::string>& names, const RdbConfig& cfg) {
  // No covariates means no confounding adjustment: run the plain test rather
  // than the weighted statistic with uniform weights (which differs by a
  // (m-1)/m variance factor).
  if (covariates.empty()) return rdb_iterate(design, cfg);
  return rdb_weighted_with(design, balance_to_pooled_mean(design, covariates, names), cfg);
}

}  // namespace rdb
