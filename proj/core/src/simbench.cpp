#include "rdb/simbench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "rdb/continuous_outcome.hpp"
#include "rdb/error_control.hpp"

namespace rdb {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Category vector with floor-based 60/30/10 split, positions shuffled.
std::vector<double> category_vector(std::size_t d, double v60, double v30, double v10,
                                    std::mt19937_64& rng) {
  const std::size_t n60 = (d * 6) / 10;
  const std::size_t n30 = (d * 3) / 10;
  std::vector<double> out;
  out.reserve(d);
  out.insert(out.end(), n60, v60);
  out.insert(out.end(), n30, v30);
  out.insert(out.end(), d - n60 - n30, v10);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::vector<std::int64_t> multinomial_draw(std::int64_t n, const std::vector<double>& weights,
                                           std::mt19937_64& rng) {
  std::vector<std::int64_t> out(weights.size(), 0);
  double rest = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::int64_t remaining = n;
  for (std::size_t i = 0; i + 1 < weights.size() && remaining > 0; ++i) {
    if (rest <= 0.0) break;
    const double p = std::clamp(weights[i] / rest, 0.0, 1.0);
    std::binomial_distribution<std::int64_t> bin(remaining, p);
    const std::int64_t k = bin(rng);
    out[i] = k;
    remaining -= k;
    rest -= weights[i];
  }
  out.back() += remaining;
  return out;
}

std::int64_t draw_depth(const Scenario& sc, bool group2, std::mt19937_64& rng) {
  std::int64_t lo = sc.depth_min;
  std::int64_t hi = sc.depth_max;
  if (group2 && sc.beta > 1.0) {
    lo = static_cast<std::int64_t>(std::ceil(static_cast<double>(sc.depth_min) / sc.beta));
    hi = static_cast<std::int64_t>(std::floor(static_cast<double>(sc.depth_max) / sc.beta));
  }
  std::uniform_int_distribution<std::int64_t> dist(lo, hi);
  return dist(rng);
}

CountMatrix empty_counts(std::size_t d, std::size_t n) {
  CountMatrix m;
  m.component_ids.reserve(d);
  for (std::size_t i = 0; i < d; ++i) m.component_ids.push_back("c" + std::to_string(i + 1));
  m.sample_ids.reserve(n);
  for (std::size_t j = 0; j < n; ++j) m.sample_ids.push_back("s" + std::to_string(j + 1));
  m.counts.assign(d * n, 0);
  return m;
}

void fill_sample(CountMatrix& counts, std::size_t j, const std::vector<double>& abundance,
                 std::int64_t depth, std::mt19937_64& rng) {
  const double total = std::accumulate(abundance.begin(), abundance.end(), 0.0);
  if (total <= 0.0) throw NumericalError("sample " + std::to_string(j) + " has zero total abundance");
  const auto cell = multinomial_draw(depth, abundance, rng);
  for (std::size_t i = 0; i < abundance.size(); ++i) counts.at(i, j) = cell[i];
}

/// Draws one abundance vector; resamples once on an all-zero draw.
template <typename Draw>
std::vector<double> draw_abundance(std::size_t d, const Draw& draw) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> a(d);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      a[i] = draw(i);
      total += a[i];
    }
    if (total > 0.0) return a;
  }
  throw NumericalError("abundance vector is all-zero after resampling");
}

SimData gen_poisson_gamma(const Scenario& sc, std::uint64_t rep, bool continuous) {
  auto rng_eff = keyed_stream(sc.seed, rep, StreamRole::Effects);
  auto rng_ab = keyed_stream(sc.seed, rep, StreamRole::Abundance);
  auto rng_depth = keyed_stream(sc.seed, rep, StreamRole::Depth);
  auto rng_multi = keyed_stream(sc.seed, rep, StreamRole::Multinomial);

  SimData data;
  data.truth = gen_effect_sizes(sc.d, sc.s, sc.setting, rng_eff);
  const auto gamma = category_vector(sc.d, 50.0, 200.0, 10000.0, rng_ab);

  if (continuous) {
    auto rng_out = keyed_stream(sc.seed, rep, StreamRole::Outcome);
    const std::size_t m = sc.m1;
    data.counts = empty_counts(sc.d, m);
    std::vector<double> y(m);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (double& v : y) v = unif(rng_out);
    for (std::size_t j = 0; j < m; ++j) {
      auto a = draw_abundance(sc.d, [&](std::size_t i) {
        const double mean = (1.0 + (data.truth.effect[i] - 1.0) * y[j]) * gamma[i];
        std::poisson_distribution<std::int64_t> pois(mean);
        return static_cast<double>(pois(rng_ab));
      });
      fill_sample(data.counts, j, a, draw_depth(sc, false, rng_depth), rng_multi);
    }
    data.outcome = std::move(y);
    return data;
  }

  data.counts = empty_counts(sc.d, sc.m1 + sc.m2);
  for (std::size_t j = 0; j < sc.m1 + sc.m2; ++j) {
    const bool g2 = j >= sc.m1;
    data.labels.push_back(g2 ? "g2" : "g1");
    auto a = draw_abundance(sc.d, [&](std::size_t i) {
      const double mean = g2 ? data.truth.effect[i] * gamma[i] : gamma[i];
      std::poisson_distribution<std::int64_t> pois(mean);
      return static_cast<double>(pois(rng_ab));
    });
    fill_sample(data.counts, j, a, draw_depth(sc, g2, rng_depth), rng_multi);
  }
  return data;
}

SimData gen_lognormal(const Scenario& sc, std::uint64_t rep) {
  auto rng_eff = keyed_stream(sc.seed, rep, StreamRole::Effects);
  auto rng_ab = keyed_stream(sc.seed, rep, StreamRole::Abundance);
  auto rng_depth = keyed_stream(sc.seed, rep, StreamRole::Depth);
  auto rng_multi = keyed_stream(sc.seed, rep, StreamRole::Multinomial);

  SimData data;
  data.truth = gen_effect_sizes(sc.d, sc.s, sc.setting, rng_eff);
  const auto mu = category_vector(sc.d, 3.0, 5.0, 10.0, rng_ab);
  data.counts = empty_counts(sc.d, sc.m1 + sc.m2);

  // Log-abundance noise scale; the AR(1) path has the rho^|l1-l2|
  // correlation structure regardless of this marginal scale.
  const double sigma = std::sqrt(0.5);
  for (std::size_t j = 0; j < sc.m1 + sc.m2; ++j) {
    const bool g2 = j >= sc.m1;
    data.labels.push_back(g2 ? "g2" : "g1");
    const auto z = ar1_path(sc.d, sc.rho, rng_ab);
    std::vector<double> a(sc.d);
    for (std::size_t i = 0; i < sc.d; ++i) {
      const double shift = g2 ? std::log(data.truth.effect[i]) : 0.0;
      a[i] = std::exp(mu[i] + shift + sigma * z[i]);
    }
    fill_sample(data.counts, j, a, draw_depth(sc, g2, rng_depth), rng_multi);
  }
  return data;
}

SimData gen_lognormal_cov(const Scenario& sc, std::uint64_t rep) {
  constexpr std::size_t kP = 5;
  constexpr double kEta = 0.25;
  auto rng_eff = keyed_stream(sc.seed, rep, StreamRole::Effects);
  auto rng_ab = keyed_stream(sc.seed, rep, StreamRole::Abundance);
  auto rng_depth = keyed_stream(sc.seed, rep, StreamRole::Depth);
  auto rng_multi = keyed_stream(sc.seed, rep, StreamRole::Multinomial);
  auto rng_cov = keyed_stream(sc.seed, rep, StreamRole::Covariates);

  SimData data;
  data.truth = gen_effect_sizes(sc.d, sc.s, sc.setting, rng_eff);
  const auto lambda = category_vector(sc.d, 1.0, 2.0, 3.0, rng_ab);

  // Component coefficients b_i = +-lambda_i * u_i.
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::array<double, kP>> coeff(sc.d);
  for (std::size_t i = 0; i < sc.d; ++i) {
    const double sign = unif(rng_ab) < 0.5 ? 1.0 : -1.0;
    for (std::size_t t = 0; t < kP; ++t) coeff[i][t] = sign * lambda[i] * unif(rng_ab);
  }

  const std::size_t n = sc.m1 + sc.m2;
  data.counts = empty_counts(sc.d, n);
  data.covariate_names = {"x1", "x2", "x3", "x4", "x5"};
  data.covariates.assign(kP, std::vector<double>(n, 0.0));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t j = 0; j < n; ++j) {
    const bool g2 = j >= sc.m1;
    data.labels.push_back(g2 ? "g2" : "g1");
    std::array<double, kP> w;
    for (std::size_t t = 0; t < kP; ++t) {
      w[t] = (g2 ? -kEta : kEta) + gauss(rng_cov);
      data.covariates[t][j] = std::exp(w[t]) + w[t];
    }
    std::vector<double> a(sc.d);
    for (std::size_t i = 0; i < sc.d; ++i) {
      double dot = 0.0;
      for (std::size_t t = 0; t < kP; ++t) dot += w[t] * coeff[i][t];
      const double base = std::exp(dot) + expo(rng_ab);
      // The global factor 2 is absorbed by the compositional readout.
      a[i] = g2 ? 2.0 * data.truth.effect[i] * base : base;
    }
    fill_sample(data.counts, j, a, draw_depth(sc, g2, rng_depth), rng_multi);
  }
  return data;
}

SimData gen_shuffle(const Scenario& sc, std::uint64_t rep) {
  if (!sc.source) throw ContractError("shuffle scenario requires a source count matrix");
  const CountMatrix& src = *sc.source;
  const std::size_t take = sc.m1 + sc.m2;
  if (take > src.cols()) {
    throw ContractError("m1+m2 = " + std::to_string(take) + " exceeds the " +
                        std::to_string(src.cols()) + " source samples");
  }
  auto rng = keyed_stream(sc.seed, rep, StreamRole::Labels);
  std::vector<std::size_t> order(src.cols());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  SimData data;
  data.truth.effect.assign(src.rows(), 1.0);
  data.counts.component_ids = src.component_ids;
  for (std::size_t j = 0; j < take; ++j) {
    data.counts.sample_ids.push_back(src.sample_ids[order[j]]);
    data.labels.push_back(j < sc.m1 ? "g1" : "g2");
  }
  data.counts.counts.resize(src.rows() * take);
  for (std::size_t i = 0; i < src.rows(); ++i) {
    for (std::size_t j = 0; j < take; ++j) data.counts.at(i, j) = src.at(i, order[j]);
  }
  return data;
}

struct RepScore {
  bool any_false = false;
  double fdp = 0.0;
  double tdp = 0.0;
  double runtime_ms = 0.0;
};

std::vector<std::string> rejected_from_pvalues(const CountMatrix& counts,
                                               const std::vector<double>& adjusted, double alpha) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < adjusted.size(); ++i) {
    if (adjusted[i] <= alpha) out.push_back(counts.component_ids[i]);
  }
  return out;
}

std::vector<std::string> run_method(Method method, const SimData& data, const RdbConfig& cfg) {
  const bool continuous = data.outcome.has_value();
  if (continuous && method != Method::Rdb) {
    throw ContractError("method " + method_name(method) + " does not support continuous outcomes");
  }
  switch (method) {
    case Method::Rdb: {
      const auto comp = to_proportions(data.counts);
      if (continuous) {
        return rdb_continuous(make_continuous_design(comp, *data.outcome), cfg).rejected_ids();
      }
      return rdb_iterate(split_groups_by_labels(comp, data.labels), cfg).rejected_ids();
    }
    case Method::RdbCal: {
      if (data.covariates.empty()) {
        throw ContractError("RDB-CAL requires a scenario with covariates");
      }
      const auto comp = to_proportions(data.counts);
      const auto design = split_groups_by_labels(comp, data.labels);
      return rdb_weighted(design, data.covariates, data.covariate_names, cfg).rejected_ids();
    }
    case Method::WelchTssBonf: {
      const auto p = welch_tss_pvalues(data.counts, data.labels);
      return rejected_from_pvalues(data.counts, bonferroni(p), cfg.alpha);
    }
    case Method::WelchTssBh: {
      const auto p = welch_tss_pvalues(data.counts, data.labels);
      return rejected_from_pvalues(data.counts, bh_adjust(p), cfg.alpha);
    }
    case Method::WilcoxonRaw:
    case Method::WilcoxonTss: {
      const auto p = wilcoxon_pvalues(data.counts, data.labels, method == Method::WilcoxonTss);
      const auto adjusted = cfg.mode == Mode::Fdr ? bh_adjust(p) : bonferroni(p);
      return rejected_from_pvalues(data.counts, adjusted, cfg.alpha);
    }
  }
  throw ContractError("unknown method");
}

}  // namespace

std::mt19937_64 keyed_stream(std::uint64_t seed, std::uint64_t replicate, StreamRole role) {
  std::uint64_t state = seed;
  state ^= 0x6a09e667f3bcc908ULL + splitmix64(state);
  state ^= replicate * 0xff51afd7ed558ccdULL;
  splitmix64(state);
  state ^= static_cast<std::uint64_t>(role) * 0xc4ceb9fe1a85ec53ULL;
  const std::uint64_t a = splitmix64(state);
  const std::uint64_t b = splitmix64(state);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

std::vector<double> ar1_path(std::size_t d, double rho, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double innovation = std::sqrt(1.0 - rho * rho);
  std::vector<double> z(d);
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = (i == 0) ? gauss(rng) : rho * z[i - 1] + innovation * gauss(rng);
  }
  return z;
}

GroundTruth gen_effect_sizes(std::size_t d, std::size_t s, int setting, std::mt19937_64& rng) {
  if (s > d) throw ContractError("s cannot exceed d");
  if (setting != 1 && setting != 2) throw ContractError("effect setting must be 1 or 2");
  GroundTruth truth;
  truth.effect.assign(d, 1.0);
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: first s entries are the planted components.
  for (std::size_t i = 0; i < s; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, d - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::uniform_real_distribution<double> strong(1.0, 5.0);
  std::uniform_real_distribution<double> weak(0.2, 1.0);
  const std::size_t n_strong = (setting == 1) ? s : (s + 1) / 2;
  for (std::size_t i = 0; i < s; ++i) {
    truth.differential.push_back(idx[i]);
    truth.effect[idx[i]] = (i < n_strong) ? strong(rng) : weak(rng);
  }
  std::sort(truth.differential.begin(), truth.differential.end());
  return truth;
}

SimData generate_replicate(const Scenario& sc, std::uint64_t replicate) {
  if (sc.kind != ScenarioKind::Shuffle && 2 * sc.s >= sc.d) {
    throw ContractError("s = " + std::to_string(sc.s) + " violates the identifiability constraint "
                        "|I0| > d/2 (need 2s < d)");
  }
  switch (sc.kind) {
    case ScenarioKind::PoissonGamma: return gen_poisson_gamma(sc, replicate, false);
    case ScenarioKind::PoissonGammaContinuous: return gen_poisson_gamma(sc, replicate, true);
    case ScenarioKind::LogNormal: return gen_lognormal(sc, replicate);
    case ScenarioKind::LogNormalCov: return gen_lognormal_cov(sc, replicate);
    case ScenarioKind::Shuffle: return gen_shuffle(sc, replicate);
  }
  throw ContractError("unknown scenario kind");
}

std::vector<double> welch_tss_pvalues(const CountMatrix& counts,
                                      const std::vector<std::string>& labels) {
  const auto comp = to_proportions(counts);
  std::vector<std::size_t> g1, g2;
  std::set<std::string> levels(labels.begin(), labels.end());
  if (levels.size() != 2) throw ContractError("Welch baseline needs exactly 2 group levels");
  for (std::size_t j = 0; j < labels.size(); ++j) {
    (labels[j] == *levels.begin() ? g1 : g2).push_back(j);
  }
  const double m1 = static_cast<double>(g1.size());
  const double m2 = static_cast<double>(g2.size());

  std::vector<double> pvals(comp.rows(), 1.0);
  for (std::size_t i = 0; i < comp.rows(); ++i) {
    auto moments = [&](const std::vector<std::size_t>& idx) {
      double mean = 0.0;
      for (std::size_t j : idx) mean += comp.at(i, j);
      mean /= static_cast<double>(idx.size());
      double var = 0.0;
      for (std::size_t j : idx) var += (comp.at(i, j) - mean) * (comp.at(i, j) - mean);
      var /= static_cast<double>(idx.size() - 1);
      return std::pair{mean, var};
    };
    const auto [mean1, var1] = moments(g1);
    const auto [mean2, var2] = moments(g2);
    const double se2 = var1 / m1 + var2 / m2;
    if (se2 == 0.0) {
      pvals[i] = (mean1 == mean2) ? 1.0 : 0.0;
      continue;
    }
    const double t = (mean1 - mean2) / std::sqrt(se2);
    const double df = se2 * se2 /
                      ((var1 / m1) * (var1 / m1) / (m1 - 1.0) + (var2 / m2) * (var2 / m2) / (m2 - 1.0));
    boost::math::students_t dist(df);
    pvals[i] = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  }
  return pvals;
}

std::vector<double> wilcoxon_pvalues(const CountMatrix& counts, const std::vector<std::string>& labels,
                                     bool tss) {
  std::vector<std::size_t> g1, g2;
  std::set<std::string> levels(labels.begin(), labels.end());
  if (levels.size() != 2) throw ContractError("Wilcoxon baseline needs exactly 2 group levels");
  for (std::size_t j = 0; j < labels.size(); ++j) {
    (labels[j] == *levels.begin() ? g1 : g2).push_back(j);
  }
  CompositionMatrix comp;
  if (tss) comp = to_proportions(counts);
  auto value = [&](std::size_t i, std::size_t j) {
    return tss ? comp.at(i, j) : static_cast<double>(counts.at(i, j));
  };

  const double m1 = static_cast<double>(g1.size());
  const double m2 = static_cast<double>(g2.size());
  const double n = m1 + m2;
  boost::math::normal gauss;

  std::vector<double> pvals(counts.rows(), 1.0);
  std::vector<std::pair<double, int>> pooled;  // (value, group)
  for (std::size_t i = 0; i < counts.rows(); ++i) {
    pooled.clear();
    for (std::size_t j : g1) pooled.emplace_back(value(i, j), 1);
    for (std::size_t j : g2) pooled.emplace_back(value(i, j), 2);
    std::sort(pooled.begin(), pooled.end());

    double rank_sum1 = 0.0;
    double tie_term = 0.0;
    std::size_t a = 0;
    while (a < pooled.size()) {
      std::size_t b = a;
      while (b < pooled.size() && pooled[b].first == pooled[a].first) ++b;
      const double t = static_cast<double>(b - a);
      const double avg_rank = 0.5 * static_cast<double>(a + 1 + b);
      for (std::size_t k = a; k < b; ++k) {
        if (pooled[k].second == 1) rank_sum1 += avg_rank;
      }
      tie_term += t * t * t - t;
      a = b;
    }
    const double mu = m1 * (n + 1.0) / 2.0;
    const double var = m1 * m2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
      pvals[i] = 1.0;
      continue;
    }
    double z = rank_sum1 - mu;
    z += (z > 0.0) ? -0.5 : (z < 0.0 ? 0.5 : 0.0);  // continuity correction
    z /= std::sqrt(var);
    pvals[i] = 2.0 * boost::math::cdf(boost::math::complement(gauss, std::fabs(z)));
    pvals[i] = std::min(1.0, pvals[i]);
  }
  return pvals;
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Rdb: return "RDB";
    case Method::RdbCal: return "RDB-CAL";
    case Method::WelchTssBonf: return "WELCH_TSS_BONF";
    case Method::WelchTssBh: return "WELCH_TSS_BH";
    case Method::WilcoxonRaw: return "WILCOXON_RAW";
    case Method::WilcoxonTss: return "WILCOXON_TSS";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::Rdb, Method::RdbCal, Method::WelchTssBonf, Method::WelchTssBh,
                   Method::WilcoxonRaw, Method::WilcoxonTss}) {
    if (method_name(m) == name) return m;
  }
  throw ContractError("unknown method \"" + name + "\"");
}

std::string scenario_kind_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::PoissonGamma: return "pg";
    case ScenarioKind::PoissonGammaContinuous: return "pg-continuous";
    case ScenarioKind::LogNormal: return "lognormal";
    case ScenarioKind::LogNormalCov: return "lognormal-cov";
    case ScenarioKind::Shuffle: return "shuffle";
  }
  return "?";
}

PerformanceReport run_scenario(const Scenario& sc, const std::vector<Method>& methods,
                               std::size_t reps, const RdbConfig& cfg, unsigned threads) {
  if (reps < 1) throw ContractError("reps must be >= 1");
  if (methods.empty()) throw ContractError("no methods requested");
  const std::size_t n_methods = methods.size();
  std::vector<std::vector<RepScore>> scores(n_methods, std::vector<RepScore>(reps));

  std::atomic<std::size_t> next{0};
  std::mutex fail_mutex;
  std::optional<std::string> failure;
  bool failure_is_contract = false;

  auto worker = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= reps) return;
      {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (failure) return;
      }
      try {
        const SimData data = generate_replicate(sc, r);
        std::set<std::string> truth_ids;
        for (std::size_t i : data.truth.differential) {
          truth_ids.insert(data.counts.component_ids[i]);
        }
        for (std::size_t mi = 0; mi < n_methods; ++mi) {
          const auto t0 = std::chrono::steady_clock::now();
          const auto rejected = run_method(methods[mi], data, cfg);
          const auto t1 = std::chrono::steady_clock::now();
          std::size_t false_hits = 0, true_hits = 0;
          for (const auto& id : rejected) {
            if (truth_ids.count(id)) ++true_hits;
            else ++false_hits;
          }
          RepScore& rs = scores[mi][r];
          rs.any_false = false_hits > 0;
          rs.fdp = static_cast<double>(false_hits) /
                   static_cast<double>(std::max<std::size_t>(rejected.size(), 1));
          rs.tdp = truth_ids.empty() ? 0.0
                                     : static_cast<double>(true_hits) /
                                           static_cast<double>(truth_ids.size());
          rs.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
      } catch (const ContractError& e) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (!failure) {
          failure = "replicate " + std::to_string(r) + ": " + e.what();
          failure_is_contract = true;
        }
        return;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (!failure) failure = "replicate " + std::to_string(r) + ": " + e.what();
        return;
      }
    }
  };

  const unsigned nthreads = std::max(1u, threads);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    // Input-contract violations keep their type so callers can distinguish
    // bad configurations from genuine numerical failures.
    if (failure_is_contract) throw ContractError(*failure);
    throw NumericalError(*failure);
  }

  PerformanceReport report;
  report.scenario = sc;
  const double rr = static_cast<double>(reps);
  const bool has_power = sc.kind != ScenarioKind::Shuffle && sc.s > 0;
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    MethodScore ms;
    ms.reps = reps;
    double sum_false = 0.0, sum_fdp = 0.0, sum_tdp = 0.0, sum_rt = 0.0;
    for (const auto& rs : scores[mi]) {
      sum_false += rs.any_false ? 1.0 : 0.0;
      sum_fdp += rs.fdp;
      sum_tdp += rs.tdp;
      sum_rt += rs.runtime_ms;
    }
    ms.fwer = sum_false / rr;
    ms.fwer_se = std::sqrt(ms.fwer * (1.0 - ms.fwer) / rr);
    ms.fdr = sum_fdp / rr;
    double sd_fdp = 0.0, sd_tdp = 0.0;
    for (const auto& rs : scores[mi]) {
      sd_fdp += (rs.fdp - ms.fdr) * (rs.fdp - ms.fdr);
      sd_tdp += (rs.tdp - sum_tdp / rr) * (rs.tdp - sum_tdp / rr);
    }
    ms.fdr_se = reps > 1 ? std::sqrt(sd_fdp / (rr - 1.0) / rr) : 0.0;
    if (has_power) {
      ms.power = sum_tdp / rr;
      ms.power_se = reps > 1 ? std::sqrt(sd_tdp / (rr - 1.0) / rr) : 0.0;
    }
    ms.mean_runtime_ms = sum_rt / rr;
    report.scores.emplace_back(methods[mi], ms);
  }
  return report;
}

std::string report_to_tsv(const PerformanceReport& report, const std::string& provenance,
                          bool include_runtime) {
  std::ostringstream out;
  const Scenario& sc = report.scenario;
  out << "# scenario=" << scenario_kind_name(sc.kind) << " d=" << sc.d << " s=" << sc.s
      << " m1=" << sc.m1 << " m2=" << sc.m2 << " setting=" << sc.setting << " beta=" << sc.beta
      << " rho=" << sc.rho << " seed=" << sc.seed << "\n";
  std::istringstream prov(provenance);
  std::string line;
  while (std::getline(prov, line)) out << "# " << line << "\n";
  out << "method\tmetric\testimate\tse\treps\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& [method, ms] : report.scores) {
    const std::string name = method_name(method);
    out << name << "\tfwer\t" << fmt(ms.fwer) << "\t" << fmt(ms.fwer_se) << "\t" << ms.reps << "\n";
    out << name << "\tfdr\t" << fmt(ms.fdr) << "\t" << fmt(ms.fdr_se) << "\t" << ms.reps << "\n";
    if (ms.power) {
      out << name << "\tpower\t" << fmt(*ms.power) << "\t" << fmt(*ms.power_se) << "\t" << ms.reps
          << "\n";
    } else {
      out << name << "\tpower\tNA\tNA\t" << ms.reps << "\n";
    }
    if (include_runtime) {
      out << name << "\truntime_ms\t" << fmt(ms.mean_runtime_ms) << "\tNA\t" << ms.reps << "\n";
    }
  }
  return out.str();
}

}  // namespace rdb
