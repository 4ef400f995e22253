/* Copyright 2026 The Clipmap Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "clipmap/affinity.hpp"
#include "test_support.hpp"

namespace clipmap {
namespace {

// --- oracles ---------------------------------------------------------------

/// Perplexity 2^H (H in bits) of p_j ~ exp(-d_j / (2 sigma^2)).
double perplexity_at(const std::vector<double>& d, double sigma, std::vector<double>* p_out = nullptr) {
  std::vector<double> p(d.size());
  const double dmin = *std::min_element(d.begin(), d.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) sum += p[j] = std::exp(-(d[j] - dmin) / (2 * sigma * sigma));
  double h = 0.0;
  for (double& v : p) {
    v /= sum;
    if (v > 0) h -= v * std::log2(v);
  }
  if (p_out) *p_out = p;
  return std::pow(2.0, h);
}

/// Plain bisection directly on sigma.
double sigma_oracle(const std::vector<double>& d, double target) {
  double lo = 1e-6, hi = 1e6;
  for (int i = 0; i < 300; ++i) {
    const double mid = std::sqrt(lo * hi);
    if (perplexity_at(d, mid) > target) hi = mid; else lo = mid;
  }
  return std::sqrt(lo * hi);
}

// --- kNN -------------------------------------------------------------------

TEST(Knn, CollinearPoints) {
  const Matrix x(3, 1, std::vector<double>{0, 1, 3});
  const auto nn = knn_distances(x, 1);
  EXPECT_EQ(nn.index, (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_EQ(nn.sq_distance, (std::vector<double>{1, 1, 4}));
}

TEST(Knn, DuplicatesTieByIndex) {
  const Matrix x(4, 2, std::vector<double>{0, 0, 5, 5, 0, 0, 0, 0});
  const auto nn = knn_distances(x, 2);
  EXPECT_EQ(nn.indices_of(0)[0], 2u);
  EXPECT_EQ(nn.indices_of(0)[1], 3u);
  EXPECT_EQ(nn.distances_of(0)[0], 0.0);
  EXPECT_EQ(nn.indices_of(3)[0], 0u);
  EXPECT_EQ(nn.indices_of(3)[1], 2u);
}

TEST(Knn, MatchesExhaustiveScan) {
  const Matrix x = testing::random_matrix(100, 6, 21);
  const auto nn = knn_distances(x, 5);
  for (std::size_t i = 0; i < 100; ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < 100; ++j) {
      if (j == i) continue;
      double d = 0;
      for (std::size_t k = 0; k < 6; ++k) d += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
      all.emplace_back(d, j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t r = 0; r < 5; ++r) {
      EXPECT_EQ(nn.indices_of(i)[r], all[r].second);
      EXPECT_EQ(nn.distances_of(i)[r], all[r].first);
    }
  }
}

TEST(Knn, TooManyNeighbors) {
  EXPECT_THROW(knn_distances(Matrix(3, 1), 3), ParameterError);
}

// --- bandwidth -------------------------------------------------------------

TEST(SigmaSearch, EqualDistancesGiveExactPerplexity) {
  const std::vector<double> d{2.5, 2.5};
  const Bandwidth bw = sigma_search(d, 2.0);
  EXPECT_NEAR(bw.perplexity, 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(bw.probabilities[0], 0.5);
  EXPECT_TRUE(std::isfinite(bw.sigma));
}

TEST(SigmaSearch, MatchesIndependentBisection) {
  const std::vector<double> d{1, 4, 9};
  const Bandwidth bw = sigma_search(d, 2.0);
  const double oracle = sigma_oracle(d, 2.0);
  EXPECT_NEAR(bw.perplexity, 2.0, 1e-5);
  EXPECT_NEAR(perplexity_at(d, bw.sigma), 2.0, 1e-5);
  EXPECT_NEAR(bw.sigma, oracle, 1e-4 * oracle);
  EXPECT_TRUE(bw.converged);
}

TEST(SigmaSearch, PerplexityOneConcentratesOnNearest) {
  const std::vector<double> d{1, 4, 9};
  const Bandwidth bw = sigma_search(d, 1.0);
  EXPECT_LE(bw.perplexity, 1.0 + 1e-3);
  EXPECT_GT(bw.probabilities[0], 0.999);
  // Oracle: the perplexity at the returned sigma agrees.
  EXPECT_LE(perplexity_at(d, bw.sigma), 1.0 + 1e-3);
}

TEST(SigmaSearch, UnreachableTargetClampsToUniform) {
  const std::vector<double> d{1, 2, 3};
  const Bandwidth bw = sigma_search(d, 10.0);
  EXPECT_FALSE(bw.converged);
  EXPECT_NEAR(bw.perplexity, 3.0, 1e-6);
  EXPECT_EQ(bw.steps, kBandwidthSteps);
}

TEST(SigmaSearch, RandomRowsHitTarget) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> d(90);
    for (double& v : d) v = 1e-3 + 1e3 * rng.uniform() * rng.uniform();
    const double target = 1.5 + 60.0 * rng.uniform();
    const Bandwidth bw = sigma_search(d, target);
    ASSERT_TRUE(bw.converged) << trial;
    EXPECT_NEAR(perplexity_at(d, bw.sigma), target, 1e-5 * 10);
    EXPECT_NEAR(std::accumulate(bw.probabilities.begin(), bw.probabilities.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(SigmaSearch, Errors) {
  EXPECT_THROW(sigma_search(std::vector<double>{0, 0, 0}, 2.0), ValidationError);
  EXPECT_THROW(sigma_search(std::vector<double>{1}, 2.0), ParameterError);
  EXPECT_THROW(sigma_search(std::vector<double>{1, 2}, 0.5), ParameterError);
}

// --- joint affinities ------------------------------------------------------

void expect_valid_affinities(const AffinityMatrix& p, double perplexity) {
  EXPECT_NEAR(p.sum(), 1.0, 1e-9);
  for (std::size_t i = 0; i < p.n; ++i) {
    for (std::size_t e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      EXPECT_NE(p.col[e], i) << "diagonal entry stored";
      EXPECT_GE(p.val[e], 0.0);
      EXPECT_EQ(p.val[e], p.at(p.col[e], i)) << i << "," << p.col[e];
    }
    // Each point contributes at most floor(3 * perplexity) outgoing entries,
    // so a row holds at most that many plus incoming ones.
    EXPECT_GE(p.row_ptr[i + 1] - p.row_ptr[i], neighbor_count(perplexity));
  }
}

TEST(JointAffinities, NormalizedSymmetricNonnegative) {
  const Matrix x = testing::random_matrix(150, 10, 8);
  const auto cond = conditional_affinities(x, 10.0);
  for (std::size_t i = 0; i < 150; ++i) {
    double row = 0.0;
    for (std::size_t r = 0; r < cond.neighbors.k; ++r) row += cond.probabilities[i * cond.neighbors.k + r];
    EXPECT_NEAR(row, 1.0, 1e-9);
    EXPECT_NEAR(cond.perplexity[i], 10.0, 1e-5);
  }
  EXPECT_EQ(cond.neighbors.k, 30u);
  expect_valid_affinities(joint_affinities(x, 10.0), 10.0);
}

TEST(JointAffinities, TwoFarPairsMatchDenseFormula) {
  const Matrix x(4, 2, std::vector<double>{0, 0, 1, 0, 100, 0, 101, 0.5});
  const double perplexity = 1.2;  // 3 * 1.2 < 4
  const AffinityMatrix p = joint_affinities(x, perplexity);
  // Dense oracle: conditionals over all others with bisection-calibrated sigma.
  std::vector<std::vector<double>> cond(4, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> d;
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < 4; ++j) {
      if (j == i) continue;
      d.push_back(squared_distance(x.row(i), x.row(j)));
      idx.push_back(j);
    }
    std::vector<double> pr;
    perplexity_at(d, sigma_oracle(d, perplexity), &pr);
    for (std::size_t r = 0; r < idx.size(); ++r) cond[i][idx[r]] = pr[r];
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (i == j) continue;
      EXPECT_NEAR(p.at(i, j), (cond[i][j] + cond[j][i]) / 8.0, 1e-6) << i << j;
    }
  }
  // Perplexity 1.2 forces some mass onto the far pair; the near partner
  // still dominates by well over an order of magnitude.
  EXPECT_GT(p.at(0, 1), 20.0 * p.at(0, 2));
  EXPECT_GT(p.at(2, 3), 20.0 * p.at(1, 3));
  expect_valid_affinities(p, perplexity);
}

TEST(JointAffinities, TooFewPointsSuggestsLowerPerplexity) {
  try {
    joint_affinities(testing::random_matrix(50, 3, 1), 30.0);
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("perplexity below"), std::string::npos) << e.what();
  }
}

TEST(JointAffinities, DuplicatesAreJittered) {
  Matrix x = testing::random_matrix(40, 3, 2);
  for (std::size_t i = 20; i < 40; ++i)
    std::copy(x.row(0).begin(), x.row(0).end(), x.row(i).begin());
  const AffinityMatrix p = joint_affinities(x, 5.0);
  EXPECT_EQ(p.jittered_rows, 20u);
  expect_valid_affinities(p, 5.0);
  // Deterministic.
  const AffinityMatrix again = joint_affinities(x, 5.0);
  EXPECT_EQ(p.val, again.val);
}

}  // namespace
}  // namespace clipmap
