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

// Straightforward reference implementations used to check the library. None
// of them call into the code under test.

#ifndef CLIPMAP_TESTS_ORACLES_HPP
#define CLIPMAP_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "clipmap/matrix.hpp"
#include "clipmap/random.hpp"

namespace clipmap::oracle {

/// 2^H of a probability row, H in bits.
inline double row_perplexity(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return std::pow(2.0, h);
}

/// Leave-one-out k-NN accuracy by full sort of every row. Ties in the vote go
/// to the class of the nearest tied neighbour.
inline double knn_accuracy(const std::vector<Point2>& pts, const std::vector<int>& labels,
                           std::size_t k, int classes) {
  const std::size_t n = pts.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double da = std::pow(pts[i].x - pts[a].x, 2) + std::pow(pts[i].y - pts[a].y, 2);
      const double db = std::pow(pts[i].x - pts[b].x, 2) + std::pow(pts[i].y - pts[b].y, 2);
      return da < db;
    });
    std::vector<int> votes(classes, 0);
    for (std::size_t r = 0; r < k; ++r) ++votes[labels[order[r]]];
    const int top = *std::max_element(votes.begin(), votes.end());
    int predicted = -1;
    for (std::size_t r = 0; r < k && predicted < 0; ++r)
      if (votes[labels[order[r]]] == top) predicted = labels[order[r]];
    correct += predicted == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

/// Homogeneity and completeness from contingency-table entropies (nats).
inline std::pair<double, double> homogeneity_completeness(const std::vector<int>& clusters,
                                                          const std::vector<int>& classes) {
  const double n = static_cast<double>(classes.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> by_class, by_cluster;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    joint[{classes[i], clusters[i]}] += 1;
    by_class[classes[i]] += 1;
    by_cluster[clusters[i]] += 1;
  }
  auto entropy = [n](const std::map<int, double>& counts) {
    double h = 0;
    for (const auto& [_, c] : counts) h -= c / n * std::log(c / n);
    return h;
  };
  double class_given_cluster = 0, cluster_given_class = 0;
  for (const auto& [key, c] : joint) {
    class_given_cluster -= c / n * std::log(c / by_cluster[key.second]);
    cluster_given_class -= c / n * std::log(c / by_class[key.first]);
  }
  const double h_class = entropy(by_class), h_cluster = entropy(by_cluster);
  return {h_class == 0 ? 1.0 : 1 - class_given_cluster / h_class,
          h_cluster == 0 ? 1.0 : 1 - cluster_given_class / h_cluster};
}

/// Even-odd test with a vertical ray towards +y, half-open in x at vertices.
inline bool ray_cast_contains(const std::vector<Point2>& poly, Point2 p) {
  int crossings = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2 a = poly[i];
    const Point2 b = poly[(i + 1) % poly.size()];
    const bool straddles = (a.x <= p.x && p.x < b.x) || (b.x <= p.x && p.x < a.x);
    if (!straddles) continue;
    const double y = a.y + (p.x - a.x) * (b.y - a.y) / (b.x - a.x);
    if (y > p.y) ++crossings;
  }
  return crossings % 2 == 1;
}

inline double distance_to_boundary(const std::vector<Point2>& poly, Point2 p) {
  double best = INFINITY;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2 a = poly[i];
    const Point2 b = poly[(i + 1) % poly.size()];
    const double dx = b.x - a.x, dy = b.y - a.y;
    double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy));
  }
  return best;
}

/// 3 to 14 vertices in [-1.2, 1.2]^2: either star-shaped or arbitrary (and
/// possibly self-intersecting).
inline std::vector<Point2> random_polygon(Rng& rng) {
  const std::size_t n = 3 + rng.below(12);
  std::vector<Point2> poly;
  if (rng.below(2) == 0) {
    std::vector<double> angles(n);
    for (double& a : angles) a = 2 * std::numbers::pi * rng.uniform();
    std::sort(angles.begin(), angles.end());
    for (double a : angles) {
      const double r = 0.2 + rng.uniform();
      poly.push_back({r * std::cos(a), r * std::sin(a)});
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) poly.push_back({2 * rng.uniform() - 1, 2 * rng.uniform() - 1});
  }
  return poly;
}

/// Central differences of `f` with respect to every coordinate of `y`.
inline std::vector<Point2> finite_difference(const std::function<double(const std::vector<Point2>&)>& f,
                                             std::vector<Point2> y, double h) {
  std::vector<Point2> g(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      double& coord = axis == 0 ? y[i].x : y[i].y;
      const double saved = coord;
      coord = saved + h;
      const double up = f(y);
      coord = saved - h;
      const double down = f(y);
      coord = saved;
      (axis == 0 ? g[i].x : g[i].y) = (up - down) / (2 * h);
    }
  }
  return g;
}

inline double norm(const std::vector<Point2>& g) {
  double s = 0.0;
  for (const auto& p : g) s += p.x * p.x + p.y * p.y;
  return std::sqrt(s);
}

inline double max_abs_diff(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max({m, std::abs(a[i].x - b[i].x), std::abs(a[i].y - b[i].y)});
  return m;
}

inline double max_abs(const std::vector<Point2>& a) {
  double m = 0.0;
  for (const auto& p : a) m = std::max({m, std::abs(p.x), std::abs(p.y)});
  return m;
}

inline double cosine(const Point2& a, const Point2& b) {
  return (a.x * b.x + a.y * b.y) / (std::hypot(a.x, a.y) * std::hypot(b.x, b.y));
}

}  // namespace clipmap::oracle

#endif  // CLIPMAP_TESTS_ORACLES_HPP
