// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is independent; a thrown exception fails only the
// criterion that raised it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "rdb/continuous_outcome.hpp"
#include "rdb/covariate_balance.hpp"
#include "rdb/rdb_core.hpp"
#include "rdb/simbench.hpp"

using namespace rdb;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s: %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.empty() ? "" : " -- ",
              detail.c_str());
  if (!ok) ++failures;
}

void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(name, ok, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

/// Looks up a method's score in a performance report.
const MethodScore& score_of(const PerformanceReport& report, Method m) {
  for (const auto& [method, score] : report.scores) {
    if (method == m) return score;
  }
  throw std::runtime_error("method missing from report");
}

std::size_t id_index(const std::string& id) {
  return static_cast<std::size_t>(std::stoul(id.substr(1))) - 1;
}

// --- criterion bodies -------------------------------------------------------

std::pair<bool, std::string> noiseless_exact_recovery() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<std::size_t> d_dist(10, 300);
  std::uniform_real_distribution<double> b_dist(0.2, 5.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = d_dist(rng);
    std::uniform_int_distribution<std::size_t> s_dist(0, (d - 1) / 2);
    const std::size_t s = s_dist(rng);

    auto q2 = rdb::testing::random_simplex(d, rng);
    const double b = b_dist(rng);
    std::vector<std::size_t> idx(d);
    for (std::size_t i = 0; i < d; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::set<std::size_t> planted(idx.begin(), idx.begin() + s);

    std::vector<double> q1(d);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double f = 1.0;
      if (planted.count(i)) {
        f = 1.3 + unif(rng);
        if (unif(rng) < 0.5) f = 1.0 / f;
      }
      q1[i] = b * q2[i] * f;
      total += q1[i];
    }
    for (double& v : q1) v /= total;

    const auto res = rdb_oracle_noiseless(q1, q2);
    if (std::set<std::size_t>(res.differential.begin(), res.differential.end()) != planted) {
      return {false, "recovery mismatch at trial " + std::to_string(trial)};
    }
    if (res.iterations > s + 1) {
      return {false, "T = " + std::to_string(res.iterations) + " > s + 1 at trial " +
                         std::to_string(trial)};
    }
  }
  const double ms = elapsed_ms(start);
  return {ms < 10000.0, "1000/1000 exact, " + fmt(ms) + " ms"};
}

std::pair<bool, std::string> worked_noiseless_trace() {
  const std::vector<double> q1{0.25, 0.25, 0.375, 0.125};
  const std::vector<double> q2{0.40, 0.20, 0.30, 0.10};
  const auto res = rdb_oracle_noiseless(q1, q2);
  const bool set_ok = res.differential == std::vector<std::size_t>{0};
  const bool t_ok = res.iterations == 2;
  const bool median_ok = std::abs(res.first_iteration_median - 0.0375) <= 1e-12;
  return {set_ok && t_ok && median_ok,
          "I1 = {" + (res.differential.empty() ? std::string() : std::to_string(res.differential[0])) +
              "}, T = " + std::to_string(res.iterations) + ", median = " +
              fmt(res.first_iteration_median)};
}

std::pair<bool, std::string> null_fwer() {
  const auto start = std::chrono::steady_clock::now();
  Scenario sc;
  sc.kind = ScenarioKind::PoissonGamma;
  sc.d = 200;
  sc.s = 0;
  sc.m1 = 50;
  sc.m2 = 50;
  sc.seed = 1;
  const auto report = run_scenario(sc, {Method::Rdb}, 200, RdbConfig{}, 4);
  const auto& s = score_of(report, Method::Rdb);
  const double bound = 0.10 + 2.0 * std::sqrt(0.1 * 0.9 / 200.0);
  const double ms = elapsed_ms(start);
  return {s.fwer <= bound && ms < 120000.0,
          "FWER = " + fmt(s.fwer) + " (bound " + fmt(bound) + "), " + fmt(ms) + " ms"};
}

std::pair<bool, std::string> poisson_gamma_signal() {
  Scenario sc;
  sc.kind = ScenarioKind::PoissonGamma;
  sc.d = 200;
  sc.s = 20;
  sc.m1 = 50;
  sc.m2 = 50;
  sc.setting = 1;
  sc.seed = 1;
  const auto report = run_scenario(sc, {Method::Rdb}, 100, RdbConfig{}, 4);
  const auto& s = score_of(report, Method::Rdb);
  const bool ok = s.fwer <= 0.10 && s.power.has_value() && *s.power >= 0.85;
  return {ok, "FWER = " + fmt(s.fwer) + ", power = " + fmt(s.power.value_or(-1.0))};
}

std::pair<bool, std::string> correlated_lognormal() {
  Scenario sc;
  sc.kind = ScenarioKind::LogNormal;
  sc.d = 200;
  sc.s = 20;
  sc.m1 = 50;
  sc.m2 = 50;
  sc.setting = 1;
  sc.rho = 0.8;
  sc.seed = 1;
  const auto report = run_scenario(sc, {Method::Rdb}, 100, RdbConfig{}, 4);
  const auto& s = score_of(report, Method::Rdb);
  const double power = s.power.value_or(-1.0);
  const bool ok = s.fwer <= 0.10 && power >= 0.48 && power <= 0.68;
  return {ok, "FWER = " + fmt(s.fwer) + ", power = " + fmt(power)};
}

std::pair<bool, std::string> fdr_mode() {
  Scenario sc;
  sc.kind = ScenarioKind::PoissonGamma;
  sc.d = 200;
  sc.s = 20;
  sc.m1 = 100;
  sc.m2 = 100;
  sc.setting = 1;
  sc.seed = 1;
  RdbConfig cfg;
  cfg.mode = Mode::Fdr;
  const auto report = run_scenario(sc, {Method::Rdb}, 100, cfg, 4);
  const auto& s = score_of(report, Method::Rdb);
  const bool ok = s.fdr <= 0.17 && s.power.has_value() && *s.power >= 0.90;
  return {ok, "FDR = " + fmt(s.fdr) + ", power = " + fmt(s.power.value_or(-1.0))};
}

std::pair<bool, std::string> covariate_balancing() {
  Scenario sc;
  sc.kind = ScenarioKind::LogNormalCov;
  sc.d = 200;
  sc.s = 20;
  sc.m1 = 50;
  sc.m2 = 50;
  sc.setting = 1;
  sc.seed = 2;

  int plain_fd = 0, cal_fd = 0;
  double worst_residual = 0.0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    const auto data = generate_replicate(sc, static_cast<std::uint64_t>(rep));
    const std::set<std::size_t> truth(data.truth.differential.begin(),
                                      data.truth.differential.end());
    const auto design = split_groups_by_labels(to_proportions(data.counts), data.labels);

    auto any_false = [&](const TestOutcome& outcome) {
      for (const auto& id : outcome.rejected_ids()) {
        if (!truth.count(id_index(id))) return true;
      }
      return false;
    };

    if (any_false(rdb_iterate(design, RdbConfig{}))) ++plain_fd;
    const auto cal = rdb_weighted(design, data.covariates, data.covariate_names, RdbConfig{});
    if (any_false(cal)) ++cal_fd;
    if (!cal.balance_group1 || !cal.balance_group2) {
      return {false, "balance reports missing at replicate " + std::to_string(rep)};
    }
    worst_residual = std::max({worst_residual, cal.balance_group1->balance_residual,
                               cal.balance_group2->balance_residual});
  }
  const double plain = static_cast<double>(plain_fd) / reps;
  const double cal = static_cast<double>(cal_fd) / reps;
  const bool ok = plain >= 0.35 && cal <= 0.20 && worst_residual <= 1e-6;
  return {ok, "unweighted FWER = " + fmt(plain) + ", calibrated FWER = " + fmt(cal) +
                  ", max residual = " + fmt(worst_residual)};
}

std::pair<bool, std::string> continuous_outcome() {
  Scenario sc;
  sc.kind = ScenarioKind::PoissonGammaContinuous;
  sc.d = 200;
  sc.s = 20;
  sc.m1 = 160;
  sc.setting = 1;
  sc.seed = 1;
  const auto report = run_scenario(sc, {Method::Rdb}, 100, RdbConfig{}, 4);
  const auto& s = score_of(report, Method::Rdb);
  const bool ok = s.fwer <= 0.15 && s.power.has_value() && *s.power >= 0.80;
  return {ok, "FWER = " + fmt(s.fwer) + ", power = " + fmt(s.power.value_or(-1.0))};
}

std::pair<bool, std::string> invariant_suite() {
  std::mt19937_64 rng(555);
  int designs = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto design = rdb::testing::random_design(rng);
    const auto outcome = rdb_iterate(design, RdbConfig{});
    ++designs;

    // Conservation: renormalized mean differences sum to zero per iteration.
    for (const auto& rec : outcome.trace) {
      double s1 = 0.0, s2 = 0.0;
      std::vector<double> m1(rec.active.size(), 0.0), m2(rec.active.size(), 0.0);
      for (std::size_t r = 0; r < rec.active.size(); ++r) {
        for (const auto& p : design.group1) m1[r] += p[rec.active[r]];
        for (const auto& p : design.group2) m2[r] += p[rec.active[r]];
        m1[r] /= static_cast<double>(design.m1());
        m2[r] /= static_cast<double>(design.m2());
        s1 += m1[r];
        s2 += m2[r];
      }
      double net = 0.0;
      for (std::size_t r = 0; r < rec.active.size(); ++r) net += m1[r] / s1 - m2[r] / s2;
      if (std::abs(net) > 1e-10) {
        return {false, "conservation violated (" + fmt(net) + ") at trial " + std::to_string(trial)};
      }
    }

    // Group swap: negated statistics, identical rejection membership.
    TwoSampleDesign swapped = design;
    std::swap(swapped.group1, swapped.group2);
    std::swap(swapped.group1_level, swapped.group2_level);
    std::swap(swapped.group1_sample_index, swapped.group2_sample_index);
    const auto flipped = rdb_iterate(swapped, RdbConfig{});
    const auto ra = outcome.rejected_ids();
    const auto rb = flipped.rejected_ids();
    if (std::set<std::string>(ra.begin(), ra.end()) != std::set<std::string>(rb.begin(), rb.end())) {
      return {false, "group swap changed the rejection set at trial " + std::to_string(trial)};
    }
    for (std::size_t i = 0; i < outcome.components.size(); ++i) {
      const double a = outcome.components[i].first_iteration_statistic;
      const double b = flipped.components[i].first_iteration_statistic;
      if (std::abs(a + b) > 1e-9 * std::max(1.0, std::abs(a))) {
        return {false, "group swap statistic not negated at trial " + std::to_string(trial)};
      }
    }

    // Component permutation: decisions follow the ids.
    const std::size_t d = design.d();
    std::vector<std::size_t> perm(d);
    for (std::size_t i = 0; i < d; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    TwoSampleDesign permuted = design;
    for (std::size_t i = 0; i < d; ++i) {
      permuted.component_ids[i] = design.component_ids[perm[i]];
      for (std::size_t j = 0; j < design.m1(); ++j) permuted.group1[j][i] = design.group1[j][perm[i]];
      for (std::size_t j = 0; j < design.m2(); ++j) permuted.group2[j][i] = design.group2[j][perm[i]];
    }
    const auto shuffled = rdb_iterate(permuted, RdbConfig{});
    std::map<std::string, Decision> da, db;
    for (const auto& c : outcome.components) da[c.component_id] = c.decision;
    for (const auto& c : shuffled.components) db[c.component_id] = c.decision;
    if (da != db) {
      return {false, "permutation changed decisions at trial " + std::to_string(trial)};
    }

    // Sample-scale invariance through the counts pipeline.
    CountMatrix counts;
    const std::size_t m = design.m1() + design.m2();
    counts.component_ids = design.component_ids;
    for (std::size_t j = 0; j < m; ++j) counts.sample_ids.push_back("s" + std::to_string(j + 1));
    counts.counts.assign(d * m, 0);
    std::uniform_int_distribution<std::int64_t> cell(0, 100);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < m; ++j) counts.at(i, j) = cell(rng);
    }
    for (std::size_t j = 0; j < m; ++j) counts.at(0, j) += 1;  // avoid zero depth
    std::vector<std::string> labels(m, "A");
    for (std::size_t j = design.m1(); j < m; ++j) labels[j] = "B";

    const auto base = rdb_iterate(split_groups_by_labels(to_proportions(counts), labels), RdbConfig{});
    for (std::size_t i = 0; i < d; ++i) counts.at(i, 0) *= 1000;
    const auto scaled =
        rdb_iterate(split_groups_by_labels(to_proportions(counts), labels), RdbConfig{});
    for (std::size_t i = 0; i < base.components.size(); ++i) {
      if (base.components[i].decision != scaled.components[i].decision ||
          base.components[i].first_iteration_statistic !=
              scaled.components[i].first_iteration_statistic) {
        return {false, "sample scaling changed the result at trial " + std::to_string(trial)};
      }
    }
  }
  return {true, std::to_string(designs) + " designs, zero violations"};
}

std::pair<bool, std::string> single_test_latency() {
  auto time_single = [](std::size_t d) {
    Scenario sc;
    sc.kind = ScenarioKind::PoissonGamma;
    sc.d = d;
    sc.s = 20;
    sc.m1 = 50;
    sc.m2 = 50;
    sc.seed = 33;
    const auto data = generate_replicate(sc, 0);
    const auto design = split_groups_by_labels(to_proportions(data.counts), data.labels);
    double best = 1e18;
    for (int run = 0; run < 5; ++run) {
      const auto start = std::chrono::steady_clock::now();
      const auto outcome = rdb_iterate(design, RdbConfig{});
      best = std::min(best, elapsed_ms(start));
      if (outcome.components.empty()) throw std::runtime_error("empty outcome");
    }
    return best;
  };
  const double t200 = time_single(200);
  const double t500 = time_single(500);
  return {t200 < 50.0 && t500 < 150.0,
          "d=200: " + fmt(t200) + " ms, d=500: " + fmt(t500) + " ms"};
}

std::pair<bool, std::string> thread_determinism() {
  Scenario sc;
  sc.kind = ScenarioKind::PoissonGamma;
  sc.d = 200;
  sc.s = 20;
  sc.m1 = 50;
  sc.m2 = 50;
  sc.seed = 7;
  const std::vector<Method> methods{Method::Rdb, Method::WelchTssBonf, Method::WilcoxonTss};
  const auto one = run_scenario(sc, methods, 20, RdbConfig{}, 1);
  const auto four = run_scenario(sc, methods, 20, RdbConfig{}, 4);
  const std::string a = report_to_tsv(one, "prov");
  const std::string b = report_to_tsv(four, "prov");
  return {a == b, a == b ? "byte-identical reports at 1 and 4 threads" : "reports differ"};
}

}  // namespace

int main() {
  criterion("noiseless recovery is exact over 1000 random instances", noiseless_exact_recovery);
  criterion("four-component worked trace matches exactly", worked_noiseless_trace);
  criterion("family-wise error under the global null", null_fwer);
  criterion("Poisson-Gamma signal: error and power", poisson_gamma_signal);
  criterion("correlated log-normal: error and power", correlated_lognormal);
  criterion("FDR mode: error and power", fdr_mode);
  criterion("covariate balancing removes confounded false positives", covariate_balancing);
  criterion("continuous outcome: error and power", continuous_outcome);
  criterion("engine invariants over 200 random designs", invariant_suite);
  criterion("single-test latency", single_test_latency);
  criterion("reports are byte-deterministic across thread counts", thread_determinism);

  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
