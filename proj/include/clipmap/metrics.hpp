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

#ifndef CLIPMAP_METRICS_HPP
#define CLIPMAP_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include "json.hpp"

#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"
#include "clipmap/random.hpp"

/**
 * @file metrics.hpp
 *
 * @brief Proxies for how easy an embedding is to annotate.
 *
 * Local quality: leave-one-out k-nearest-neighbor accuracy in 2D.
 * Global quality: homogeneity and completeness of a K-means clustering with
 * K equal to the number of classes. Plus the video-time / annotation-time
 * ratio used to compare annotation methods.
 */

namespace clipmap {

/// Label id for points outside the labeled pool.
inline constexpr int kNoLabel = -1;

/// Leave-one-out kNN accuracy. Each point is predicted by majority vote of
/// its k nearest other points (ties in distance broken by index). A tie in
/// the vote goes to the tied class whose closest member is nearest. k is
/// capped at N - 1.
inline double knn_accuracy(std::span<const Point2> points, std::span<const int> labels,
                           std::size_t k = 4) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw ParameterError("points and labels differ in length");
  if (n < 2) throw ParameterError("kNN accuracy needs at least two points");
  if (k == 0) throw ParameterError("k must be >= 1");
  std::vector<std::size_t> unlabeled;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] < 0) unlabeled.push_back(i);
  if (!unlabeled.empty())
    throw ValidationError(fmt::format("unlabeled points: {}", fmt::join(unlabeled, ", ")));
  k = std::min(k, n - 1);

  std::vector<std::pair<double, std::size_t>> dist(n - 1);
  std::map<int, std::size_t> votes;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dist[c++] = {squared_distance(points[i], points[j]), j};
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    votes.clear();
    std::size_t best_count = 0;
    for (std::size_t r = 0; r < k; ++r)
      best_count = std::max(best_count, ++votes[labels[dist[r].second]]);
    int predicted = kNoLabel;
    for (std::size_t r = 0; r < k; ++r) {
      const int label = labels[dist[r].second];
      if (votes[label] == best_count) {
        predicted = label;
        break;
      }
    }
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

struct KMeansResult {
  std::vector<int> assignment;
  std::vector<Point2> centroids;
  double inertia = 0.0;
  int iterations = 0;
  /// Inertia after each assignment step of the winning restart.
  std::vector<double> inertia_history;
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  double tolerance = 1e-6;  // largest centroid shift that counts as converged
};

namespace detail {

inline std::vector<Point2> kmeans_plus_plus(std::span<const Point2> points, std::size_t k,
                                            Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Point2> centers;
  centers.reserve(k);
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  centers.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], points[first]);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!chosen[i]) total += d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        pick = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    } else {
      // Remaining points coincide with centers; take the next unchosen one.
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(points[i], points[pick]));
  }
  return centers;
}

inline double assign_nearest(std::span<const Point2> points, std::span<const Point2> centers,
                             std::vector<int>& assignment) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = squared_distance(points[i], centers[c]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    assignment[i] = arg;
    inertia += best;
  }
  return inertia;
}

inline KMeansResult lloyd(std::span<const Point2> points, std::vector<Point2> centers,
                          const KMeansOptions& opt) {
  const std::size_t n = points.size();
  const std::size_t k = centers.size();
  KMeansResult r;
  r.assignment.assign(n, 0);
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    r.inertia = assign_nearest(points, centers, r.assignment);
    r.inertia_history.push_back(r.inertia);
    r.iterations = iter + 1;

    std::vector<Point2> sums(k);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.assignment[i]);
      sums[c].x += points[i].x;
      sums[c].y += points[i].y;
      ++counts[c];
    }
    double shift = 0.0;
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      Point2 next = centers[c];
      if (counts[c] > 0) {
        next = {sums[c].x / static_cast<double>(counts[c]),
                sums[c].y / static_cast<double>(counts[c])};
      } else {
        // Empty cluster: reseed at the point farthest from its own centroid.
        double worst = -1.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d =
              squared_distance(points[i], centers[static_cast<std::size_t>(r.assignment[i])]);
          if (!taken[i] && d > worst) {
            worst = d;
            arg = i;
          }
        }
        taken[arg] = true;
        next = points[arg];
      }
      shift = std::max(shift, std::sqrt(squared_distance(next, centers[c])));
      centers[c] = next;
    }
    if (shift < opt.tolerance) break;
  }
  r.inertia = assign_nearest(points, centers, r.assignment);
  r.centroids = std::move(centers);
  return r;
}

}  // namespace detail

/// K-means with k-means++ seeding and Lloyd iterations; the restart with the
/// lowest inertia wins. Deterministic for a fixed seed.
inline KMeansResult kmeans(std::span<const Point2> points, std::size_t k, std::uint64_t seed,
                           const KMeansOptions& opt = {}) {
  if (k == 0) throw ParameterError("k must be >= 1");
  if (k > points.size())
    throw ParameterError(fmt::format("k = {} exceeds the {} points", k, points.size()));
  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < std::max(1, opt.restarts); ++run) {
    auto centers = detail::kmeans_plus_plus(points, k, rng);
    KMeansResult r = detail::lloyd(points, std::move(centers), opt);
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

struct HomogeneityCompleteness {
  double homogeneity = 1.0;
  double completeness = 1.0;
};

/// Entropy-based cluster scores, natural log:
///   h = 1 - H(class | cluster) / H(class)   (h = 1 when H(class) = 0)
///   c = 1 - H(cluster | class) / H(cluster) (c = 1 when H(cluster) = 0)
inline HomogeneityCompleteness homogeneity_completeness(std::span<const int> clusters,
                                                        std::span<const int> labels) {
  if (clusters.size() != labels.size())
    throw ParameterError("cluster and label sequences differ in length");
  if (clusters.empty()) throw ParameterError("need at least one sample");
  const double n = static_cast<double>(clusters.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> by_cluster, by_class;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    joint[{clusters[i], labels[i]}] += 1.0;
    by_cluster[clusters[i]] += 1.0;
    by_class[labels[i]] += 1.0;
  }
  auto entropy = [n](const std::map<int, double>& counts) {
    double h = 0.0;
    for (const auto& [key, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double h_class = entropy(by_class);
  const double h_cluster = entropy(by_cluster);
  double h_class_given_cluster = 0.0, h_cluster_given_class = 0.0;
  for (const auto& [key, c] : joint) {
    const auto [cluster, label] = key;
    h_class_given_cluster -= (c / n) * std::log(c / by_cluster[cluster]);
    h_cluster_given_class -= (c / n) * std::log(c / by_class[label]);
  }
  HomogeneityCompleteness out;
  out.homogeneity = h_class == 0.0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
  out.completeness = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
  return out;
}

/// How many times faster than real time the annotation ran, rounded down.
inline std::int64_t time_gain(double video_minutes, double annotation_minutes) {
  if (!(annotation_minutes > 0.0))
    throw ParameterError("annotation time must be positive");
  if (!(video_minutes >= 0.0)) throw ParameterError("video time must be nonnegative");
  return static_cast<std::int64_t>(std::floor(video_minutes / annotation_minutes));
}

/// Maps class names to dense ids in order of first appearance. Missing names
/// become kNoLabel.
inline std::vector<int> encode_labels(std::span<const std::optional<std::string>> names,
                                      std::vector<std::string>* classes = nullptr) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  out.reserve(names.size());
  for (const auto& name : names) {
    if (!name) {
      out.push_back(kNoLabel);
      continue;
    }
    auto [it, inserted] = ids.emplace(*name, static_cast<int>(ids.size()));
    if (inserted && classes) classes->push_back(*name);
    out.push_back(it->second);
  }
  return out;
}

struct MetricsReport {
  std::size_t labeled = 0;
  std::size_t knn_k = 4;
  std::optional<double> knn_accuracy;
  std::size_t kmeans_k = 0;
  std::optional<double> homogeneity;
  std::optional<double> completeness;
  std::optional<std::int64_t> time_gain;
  double video_minutes = 0.0;
  double annotation_minutes = 0.0;
  std::map<std::string, std::size_t> per_class_counts;
};

struct ReportOptions {
  std::size_t knn_k = 4;
  std::uint64_t kmeans_seed = 0;
  double video_minutes = 0.0;
  double annotation_seconds = 0.0;
};

/// Scores the labeled subset of an embedding. Fields that need at least two
/// labeled points (or positive annotation time) stay empty otherwise.
inline MetricsReport compute_report(std::span<const Point2> points,
                                    std::span<const std::optional<std::string>> labels,
                                    const ReportOptions& opt = {}) {
  if (points.size() != labels.size())
    throw ParameterError("points and labels differ in length");
  MetricsReport r;
  r.knn_k = opt.knn_k;
  r.video_minutes = opt.video_minutes;
  r.annotation_minutes = opt.annotation_seconds / 60.0;
  std::vector<Point2> pts;
  std::vector<std::optional<std::string>> names;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!labels[i]) continue;
    pts.push_back(points[i]);
    names.push_back(labels[i]);
    ++r.per_class_counts[*labels[i]];
  }
  r.labeled = pts.size();
  r.kmeans_k = r.per_class_counts.size();
  if (pts.size() >= 2) {
    const std::vector<int> ids = encode_labels(names);
    r.knn_accuracy = knn_accuracy(pts, ids, opt.knn_k);
    const KMeansResult km = kmeans(pts, r.kmeans_k, opt.kmeans_seed);
    const auto hc = homogeneity_completeness(km.assignment, ids);
    r.homogeneity = hc.homogeneity;
    r.completeness = hc.completeness;
  }
  if (r.annotation_minutes > 0.0) r.time_gain = time_gain(r.video_minutes, r.annotation_minutes);
  return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"labeled", r.labeled},
          {"knn_k", r.knn_k},
          {"knn_accuracy", opt(r.knn_accuracy)},
          {"kmeans_k", r.kmeans_k},
          {"homogeneity", opt(r.homogeneity)},
          {"completeness", opt(r.completeness)},
          {"time_gain", opt(r.time_gain)},
          {"video_minutes", r.video_minutes},
          {"annotation_minutes", r.annotation_minutes},
          {"per_class_counts", r.per_class_counts}};
}

}  // namespace clipmap

#endif  // CLIPMAP_METRICS_HPP
