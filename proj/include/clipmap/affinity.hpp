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

#ifndef CLIPMAP_AFFINITY_HPP
#define CLIPMAP_AFFINITY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"
#include "clipmap/random.hpp"

/**
 * @file affinity.hpp
 *
 * @brief Input-space similarities for t-SNE.
 *
 * Each point i gets a Gaussian conditional distribution over its nearest
 * neighbors, p_{j|i} proportional to exp(-d_ij / (2 sigma_i^2)) where d_ij is
 * the squared Euclidean distance. sigma_i is calibrated so the distribution
 * has the requested perplexity 2^H (H in bits). The conditionals are then
 * symmetrized into a sparse joint distribution that sums to one.
 */

namespace clipmap {

/// Nearest-neighbor lists, flattened row-major: entry (i, r) is the r-th
/// nearest other point of i.
struct NeighborLists {
  std::size_t points = 0;
  std::size_t k = 0;
  std::vector<std::size_t> index;
  std::vector<double> sq_distance;

  std::span<const std::size_t> indices_of(std::size_t i) const {
    return {index.data() + i * k, k};
  }
  std::span<const double> distances_of(std::size_t i) const {
    return {sq_distance.data() + i * k, k};
  }
};

/// Exact kNN by exhaustive scan. Neighbors are sorted ascending by squared
/// distance with ties broken by the smaller index.
inline NeighborLists knn_distances(const Matrix& features, std::size_t k) {
  const std::size_t n = features.rows();
  if (k >= n)
    throw ParameterError(fmt::format(
        "k_nn = {} requires more than {} points (have {})", k, k, n));
  NeighborLists out;
  out.points = n;
  out.k = k;
  out.index.resize(n * k);
  out.sq_distance.resize(n * k);

  std::vector<std::pair<double, std::size_t>> candidates(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = features.row(i);
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      candidates[c++] = {squared_distance(xi, features.row(j)), j};
    }
    std::partial_sort(candidates.begin(),
                      candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end());
    for (std::size_t r = 0; r < k; ++r) {
      out.sq_distance[i * k + r] = candidates[r].first;
      out.index[i * k + r] = candidates[r].second;
    }
  }
  return out;
}

/// Outcome of calibrating one point's Gaussian bandwidth.
struct Bandwidth {
  double beta = 0.0;   // 1 / (2 sigma^2)
  double sigma = 0.0;
  double perplexity = 0.0;  // achieved 2^H
  int steps = 0;
  bool converged = false;   // false: clamped at the end of the search range
  std::vector<double> probabilities;  // conditional p_{j|i}, sums to 1
};

inline constexpr double kPerplexityTolerance = 1e-5;
inline constexpr int kBandwidthSteps = 50;

namespace detail {

/// Fills `p` with exp(-beta * shifted) normalized, returns perplexity.
inline double conditional_perplexity(std::span<const double> shifted, double beta,
                                     std::span<double> p) {
  double sum = 0.0;
  for (std::size_t j = 0; j < shifted.size(); ++j) {
    p[j] = std::exp(-beta * shifted[j]);
    sum += p[j];
  }
  double weighted = 0.0;
  for (std::size_t j = 0; j < shifted.size(); ++j) {
    p[j] /= sum;
    weighted += p[j] * shifted[j];
  }
  // Natural-log entropy of the normalized distribution; 2^{H_bits} == e^{H_nats}.
  const double entropy_nats = std::log(sum) + beta * weighted;
  const double entropy_bits = entropy_nats / std::numbers::ln2;
  return std::exp2(entropy_bits);
}

}  // namespace detail

/// Bisection for the bandwidth that gives `perplexity`. Distances are squared
/// Euclidean. The search runs in log(beta) over a range scaled to the
/// distances, so targets outside the achievable interval clamp to the nearest
/// end: uniform weights (perplexity = number of neighbors) or all mass on the
/// nearest neighbors.
inline Bandwidth sigma_search(std::span<const double> distances, double perplexity) {
  if (distances.size() < 2)
    throw ParameterError("bandwidth search needs at least two neighbor distances");
  if (!(perplexity >= 1.0)) throw ParameterError("perplexity must be >= 1");
  const double dmin = *std::min_element(distances.begin(), distances.end());
  const double dmax = *std::max_element(distances.begin(), distances.end());
  if (dmax <= 0.0)
    throw ValidationError("all neighbor distances are zero; jitter the input");

  // Shifting by the smallest distance leaves p unchanged and avoids underflow.
  std::vector<double> shifted(distances.size());
  double scale = 0.0;
  std::size_t positive = 0;
  for (std::size_t j = 0; j < distances.size(); ++j) {
    shifted[j] = distances[j] - dmin;
    if (shifted[j] > 0.0) {
      scale += shifted[j];
      ++positive;
    }
  }

  Bandwidth out;
  out.probabilities.resize(distances.size());
  if (positive == 0) {
    // Equal distances: every bandwidth yields the uniform distribution.
    out.beta = 1.0 / dmax;
    out.perplexity =
        detail::conditional_perplexity(shifted, out.beta, out.probabilities);
    out.sigma = std::sqrt(1.0 / (2.0 * out.beta));
    out.converged = std::abs(out.perplexity - perplexity) <= kPerplexityTolerance;
    return out;
  }
  scale /= static_cast<double>(positive);

  double lo = -50.0;
  double hi = 50.0;
  double t = 0.0;
  for (int step = 1; step <= kBandwidthSteps; ++step) {
    out.beta = std::exp(t) / scale;
    out.perplexity = detail::conditional_perplexity(shifted, out.beta, out.probabilities);
    out.steps = step;
    const double diff = out.perplexity - perplexity;
    if (std::abs(diff) <= kPerplexityTolerance) {
      out.converged = true;
      break;
    }
    if (diff > 0.0)
      lo = t;  // too flat: sharpen
    else
      hi = t;
    t = 0.5 * (lo + hi);
  }
  out.sigma = std::sqrt(1.0 / (2.0 * out.beta));
  return out;
}

/// Per-point conditionals over the k = floor(3 * perplexity) nearest neighbors.
struct ConditionalAffinities {
  NeighborLists neighbors;
  std::vector<double> probabilities;  // same layout as neighbors.index
  std::vector<double> sigma;
  std::vector<double> perplexity;     // achieved, per point
};

inline std::size_t neighbor_count(double perplexity) {
  return static_cast<std::size_t>(std::floor(3.0 * perplexity));
}

inline void check_perplexity(std::size_t n, double perplexity) {
  if (!(perplexity >= 1.0)) throw ParameterError("perplexity must be >= 1");
  const std::size_t k = neighbor_count(perplexity);
  if (n <= k)
    throw ParameterError(fmt::format(
        "{} points are too few for perplexity {} (needs more than {}); "
        "use a perplexity below {:.4g}",
        n, perplexity, k, static_cast<double>(n - 1) / 3.0));
}

inline ConditionalAffinities conditional_affinities(const Matrix& features,
                                                    double perplexity) {
  check_perplexity(features.rows(), perplexity);
  ConditionalAffinities out;
  out.neighbors = knn_distances(features, neighbor_count(perplexity));
  const std::size_t n = features.rows();
  const std::size_t k = out.neighbors.k;
  out.probabilities.resize(n * k);
  out.sigma.resize(n);
  out.perplexity.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Bandwidth bw = sigma_search(out.neighbors.distances_of(i), perplexity);
    std::copy(bw.probabilities.begin(), bw.probabilities.end(),
              out.probabilities.begin() + static_cast<std::ptrdiff_t>(i * k));
    out.sigma[i] = bw.sigma;
    out.perplexity[i] = bw.perplexity;
  }
  return out;
}

/// Sparse symmetric joint probabilities in CSR form. Both (i, j) and (j, i)
/// are stored.
struct AffinityMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;  // size n + 1
  std::vector<std::size_t> col;
  std::vector<double> val;
  std::vector<double> sigma;
  std::size_t jittered_rows = 0;

  std::size_t nnz() const noexcept { return val.size(); }

  double sum() const { return std::accumulate(val.begin(), val.end(), 0.0); }

  /// p_ij, zero when not stored.
  double at(std::size_t i, std::size_t j) const {
    const auto begin = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
    const auto end = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
    const auto it = std::lower_bound(begin, end, j);
    return (it != end && *it == j) ? val[static_cast<std::size_t>(it - col.begin())]
                                   : 0.0;
  }
};

/// p_ij = (p_{j|i} + p_{i|j}) / (2N).
inline AffinityMatrix symmetrize(const ConditionalAffinities& cond) {
  const std::size_t n = cond.neighbors.points;
  const std::size_t k = cond.neighbors.k;
  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::vector<Entry> entries;
  entries.reserve(2 * n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t j = cond.neighbors.index[i * k + r];
      const double p = cond.probabilities[i * k + r];
      entries.push_back({i, j, p});
      entries.push_back({j, i, p});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });

  AffinityMatrix out;
  out.n = n;
  out.sigma = cond.sigma;
  out.row_ptr.assign(n + 1, 0);
  const double norm = 1.0 / (2.0 * static_cast<double>(n));
  for (std::size_t e = 0; e < entries.size();) {
    const std::size_t row = entries[e].row;
    const std::size_t c = entries[e].col;
    double v = 0.0;
    for (; e < entries.size() && entries[e].row == row && entries[e].col == c; ++e)
      v += entries[e].value;
    out.col.push_back(c);
    out.val.push_back(v * norm);
    ++out.row_ptr[row + 1];
  }
  for (std::size_t i = 0; i < n; ++i) out.row_ptr[i + 1] += out.row_ptr[i];
  return out;
}

inline constexpr double kDuplicateJitter = 1e-8;

/// Perturbs exact duplicate rows (all but the first of each group) by
/// deterministic Gaussian noise of scale 1e-8. Returns the number of rows moved.
inline std::size_t jitter_duplicates(Matrix& features) {
  const std::size_t n = features.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto row_less = [&](std::size_t a, std::size_t b) {
    const auto ra = features.row(a);
    const auto rb = features.row(b);
    if (std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end()))
      return true;
    if (std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end()))
      return false;
    return a < b;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<std::size_t> duplicates;
  for (std::size_t r = 1; r < n; ++r) {
    const auto prev = features.row(order[r - 1]);
    const auto cur = features.row(order[r]);
    if (std::equal(prev.begin(), prev.end(), cur.begin())) duplicates.push_back(order[r]);
  }
  for (std::size_t i : duplicates) {
    Rng rng(0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(i));
    for (double& v : features.row(i)) v += kDuplicateJitter * rng.normal();
  }
  return duplicates.size();
}

/// Joint affinities for t-SNE. Duplicate rows are jittered first; the count is
/// reported in `jittered_rows`.
inline AffinityMatrix joint_affinities(const Matrix& features, double perplexity) {
  check_perplexity(features.rows(), perplexity);
  Matrix work = features;
  const std::size_t jittered = jitter_duplicates(work);
  AffinityMatrix p = symmetrize(conditional_affinities(work, perplexity));
  p.jittered_rows = jittered;
  return p;
}

}  // namespace clipmap

#endif  // CLIPMAP_AFFINITY_HPP
