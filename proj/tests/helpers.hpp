#pragma once

// Shared fixtures for the test suites: hand-built designs and seeded random
// design generators.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rdb/data_model.hpp"

namespace rdb::testing {

/// Builds a TwoSampleDesign directly from per-sample proportion vectors.
inline TwoSampleDesign make_design(std::vector<std::vector<double>> group1,
                                   std::vector<std::vector<double>> group2) {
  TwoSampleDesign design;
  const std::size_t d = group1.at(0).size();
  for (std::size_t i = 0; i < d; ++i) design.component_ids.push_back("c" + std::to_string(i + 1));
  design.group1_level = "g1";
  design.group2_level = "g2";
  for (std::size_t j = 0; j < group1.size(); ++j) design.group1_sample_index.push_back(j);
  for (std::size_t j = 0; j < group2.size(); ++j) {
    design.group2_sample_index.push_back(group1.size() + j);
  }
  design.group1 = std::move(group1);
  design.group2 = std::move(group2);
  return design;
}

/// The worked two-component example: group-1 samples (0.6,0.4), (0.8,0.2),
/// group-2 samples (0.5,0.5), (0.3,0.7). First-iteration statistics are
/// (+0.3/sqrt(0.02), -0.3/sqrt(0.02)) = (+2.1213, -2.1213).
inline TwoSampleDesign two_component_example() {
  return make_design({{0.6, 0.4}, {0.8, 0.2}}, {{0.5, 0.5}, {0.3, 0.7}});
}

/// Random proportion vector via normalized Gamma draws (symmetric Dirichlet).
inline std::vector<double> random_simplex(std::size_t d, std::mt19937_64& rng, double shape = 1.0) {
  std::gamma_distribution<double> gamma(shape, 1.0);
  std::vector<double> p(d);
  double total = 0.0;
  for (double& v : p) {
    v = gamma(rng) + 1e-9;  // keep strictly positive
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

/// Random two-sample design: d in [4, 30], group sizes in [3, 8], proportions
/// drawn around group-level centers so designs carry real (arbitrary) signal.
inline TwoSampleDesign random_design(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d_dist(4, 30);
  std::uniform_int_distribution<std::size_t> m_dist(3, 8);
  const std::size_t d = d_dist(rng);
  const std::size_t m1 = m_dist(rng);
  const std::size_t m2 = m_dist(rng);

  auto group = [&](std::size_t m) {
    const auto center = random_simplex(d, rng);
    std::vector<std::vector<double>> samples;
    std::gamma_distribution<double> jitter(20.0, 1.0);
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> p(d);
      double total = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        p[i] = center[i] * jitter(rng) + 1e-9;
        total += p[i];
      }
      for (double& v : p) v /= total;
      samples.push_back(std::move(p));
    }
    return samples;
  };
  return make_design(group(m1), group(m2));
}

}  // namespace rdb::testing
