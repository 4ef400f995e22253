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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "clipmap/affinity.hpp"
#include "clipmap/gradient.hpp"
#include "clipmap/ingest.hpp"
#include "clipmap/label_export.hpp"
#include "clipmap/lasso.hpp"
#include "clipmap/metrics.hpp"
#include "clipmap/session.hpp"
#include "clipmap/tsne.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace clipmap {
namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
    if (!ok) {
      pass = false;
      detail += " [x]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome affinity() {
  Outcome o;
  const Matrix x = testing::random_matrix(500, 512, 11);
  const auto t0 = std::chrono::steady_clock::now();
  const auto cond = conditional_affinities(x, 30.0);
  const auto p = symmetrize(cond);
  const double elapsed = seconds_since(t0);

  const std::size_t k = cond.neighbors.k;
  double worst = 0.0;
  for (std::size_t i = 0; i < 500; ++i) {
    const std::span<const double> row(cond.probabilities.data() + i * k, k);
    worst = std::max(worst, std::abs(oracle::row_perplexity(row) - 30.0));
  }
  o.require(worst <= 1e-4, fmt::format("max |2^H - 30| = {:.2e}", worst));
  o.require(std::abs(p.sum() - 1.0) <= 1e-9, fmt::format("|sum P - 1| = {:.2e}", std::abs(p.sum() - 1.0)));
  o.require(elapsed < 5.0, fmt::format("{:.2f} s", elapsed));
  return o;
}

Outcome gradient() {
  Outcome o;
  {
    const auto x = testing::random_matrix(200, 32, 2);
    const auto p = joint_affinities(x, 20.0);
    const auto y = testing::random_points(200, 9, 5.0);
    const auto exact = exact_gradient(p, y);
    const auto bh = bh_gradient(p, y, 0.0);
    const double rel = oracle::max_abs_diff(bh.grad, exact.grad) / oracle::max_abs(exact.grad);
    o.require(rel <= 1e-6, fmt::format("theta=0 rel err {:.1e}", rel));
  }
  {
    const auto x = testing::random_matrix(500, 512, 1);
    const auto p = joint_affinities(x, 30.0);
    const auto y = testing::random_points(500, 2, 1.0);
    const auto exact = exact_gradient(p, y);
    const auto bh = bh_gradient(p, y, 0.5);
    double worst = 1.0;
    for (std::size_t i = 0; i < 500; ++i) worst = std::min(worst, oracle::cosine(exact.grad[i], bh.grad[i]));
    o.require(worst >= 0.99, fmt::format("theta=0.5 min cosine {:.4f}", worst));
  }
  {
    const auto x = testing::random_matrix(20, 5, 17);
    const auto p = joint_affinities(x, 5.0);
    const auto y = testing::random_points(20, 3, 2.0);
    const auto g = exact_gradient(p, y);
    const auto fd = oracle::finite_difference(
        [&](const std::vector<Point2>& at) { return exact_kl_divergence(p, at); }, y, 1e-5);
    const double rel = oracle::max_abs_diff(g.grad, fd) / oracle::max_abs(fd);
    o.require(rel <= 1e-4, fmt::format("finite-difference rel err {:.1e}", rel));
  }
  return o;
}

Outcome embedding() {
  Outcome o;
  const auto data = testing::gaussian_clusters(10, 100, 512, 10.0, 7);
  const auto t0 = std::chrono::steady_clock::now();
  const Embedding e = run_tsne(data.features, TsneConfig{});
  const double elapsed = seconds_since(t0);
  const double acc = knn_accuracy(e.points, data.labels, 4);
  const auto km = kmeans(e.points, 10, 0);
  const auto hc = homogeneity_completeness(km.assignment, data.labels);
  o.require(acc >= 0.95, fmt::format("4-NN {:.4f}", acc));
  o.require(hc.homogeneity >= 0.90, fmt::format("h {:.4f}", hc.homogeneity));
  o.require(hc.completeness >= 0.90, fmt::format("c {:.4f}", hc.completeness));
  o.require(elapsed <= 120.0, fmt::format("{:.1f} s", elapsed));
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  {
    Rng rng(21);
    std::vector<Point2> pts(200);
    std::vector<int> labels(200);
    for (std::size_t i = 0; i < 200; ++i) {
      pts[i] = {rng.normal(), rng.normal()};
      labels[i] = static_cast<int>(rng.below(5));
    }
    bool all_equal = true;
    for (std::size_t k : {1, 4, 7, 10})
      all_equal &= knn_accuracy(pts, labels, k) == oracle::knn_accuracy(pts, labels, k, 5);
    o.require(all_equal, "knn matches brute force for k in {1,4,7,10}");
  }
  {
    // Classes [A,A,A,B], clusters [0,0,1,1].
    const std::vector<int> clusters{0, 0, 1, 1};
    const std::vector<int> classes{0, 0, 0, 1};
    const auto r = homogeneity_completeness(clusters, classes);
    const auto [h, c] = oracle::homogeneity_completeness(clusters, classes);
    o.require(std::abs(r.homogeneity - 0.3837) <= 1e-4 && std::abs(r.homogeneity - h) <= 1e-12,
              fmt::format("h {:.4f}", r.homogeneity));
    o.require(std::abs(r.completeness - c) <= 1e-12 && std::abs(c - 0.3113) <= 1e-4,
              fmt::format("c {:.4f} (entropy oracle {:.4f})", r.completeness, c));
  }
  {
    Rng rng(2);
    bool perfect = true;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> classes(50), clusters;
      for (int& l : classes) l = static_cast<int>(rng.below(6));
      std::vector<int> perm{0, 1, 2, 3, 4, 5};
      for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      for (int l : classes) clusters.push_back(perm[l] * 7 + 3);
      const auto r = homogeneity_completeness(clusters, classes);
      perfect &= std::abs(r.homogeneity - 1) < 1e-12 && std::abs(r.completeness - 1) < 1e-12;
    }
    o.require(perfect, "bijective relabeling gives (1,1)");
  }
  return o;
}

Outcome time_arithmetic() {
  Outcome o;
  const auto g1 = time_gain(769, 42), g2 = time_gain(769, 31), g3 = time_gain(769, 21);
  o.require(g1 == 18 && g2 == 24 && g3 == 36, fmt::format("time gains {}/{}/{}", g1, g2, g3));
  Session s(testing::make_dataset(1, 1, Matrix(1, 1)));
  for (double t : {600, 552, 516, 450, 240, 180}) s.record_toa(t);
  o.require(s.cumulative_toa() == 2538.0, fmt::format("cumulative ToA {} s", s.cumulative_toa()));
  return o;
}

Outcome lasso() {
  Outcome o;
  Rng rng(5);
  std::size_t compared = 0, disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto verts = oracle::random_polygon(rng);
    const LassoPolygon poly(verts);
    for (int i = 0; i < 1000; ++i) {
      const Point2 p{2.4 * rng.uniform() - 1.2, 2.4 * rng.uniform() - 1.2};
      if (oracle::distance_to_boundary(verts, p) < 1e-9) continue;
      ++compared;
      disagreements += poly.contains(p) != oracle::ray_cast_contains(verts, p);
    }
  }
  o.require(disagreements == 0, fmt::format("{} disagreements over {} points", disagreements, compared));
  return o;
}

Outcome roundtrips() {
  Outcome o;
  const testing::TempDir dir;
  {
    Rng rng(3);
    bool exact = true;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t rows = 1 + rng.below(50), cols = 1 + rng.below(40);
      Matrix m(rows, cols);
      for (double& v : m.data()) v = static_cast<double>(static_cast<float>(rng.normal() * 1e3));
      write_features(dir / "a.f32", m);
      const Matrix back = read_features(dir / "a.f32", rows, cols);
      write_features(dir / "b.f32", back);
      exact &= back == m && slurp(dir / "a.f32") == slurp(dir / "b.f32");
    }
    o.require(exact, "feature blob bit-exact");
  }
  {
    auto ds = testing::make_dataset(4, 5, testing::random_matrix(20, 6, 9));
    const auto manifest = write_dataset(ds, dir.path(), "features");
    Session s(load_dataset(manifest), "features.json");
    std::vector<ClipId> ids;
    for (const auto& c : s.dataset().clips) ids.push_back(c.id);
    s.assign_label(std::vector<ClipId>(ids.begin(), ids.begin() + 7), "a", 1);
    s.advance_round();
    s.assign_label(std::vector<ClipId>(ids.begin() + 3, ids.begin() + 9), "b", 2);
    s.record_toa(12.5);
    s.set_budget_seconds(5000);
    Embedding e;
    e.points = testing::random_points(20, 4);
    save_embedding(dir / "embedding.json", e);
    s.set_embedding_path("embedding.json");
    s.save(dir / "session.json");
    const Session back = Session::load(dir / "session.json");
    const bool same = back.labels() == s.labels() && back.round() == s.round() &&
                      back.toa_log() == s.toa_log() && back.to_json().dump() == s.to_json().dump() &&
                      back.view() && back.view().embedding->points == e.points;
    o.require(same, "session save/load identical");
  }
  {
    Rng rng(11);
    bool identity = true;
    for (int trial = 0; trial < 50; ++trial) {
      const auto videos = 1 + rng.below(4);
      const auto per_video = 1 + rng.below(30);
      Dataset ds = testing::make_dataset(videos, per_video, Matrix(videos * per_video, 1),
                                         24.0 + static_cast<double>(rng.below(7)),
                                         static_cast<std::int64_t>(8 + rng.below(120)));
      LabelStore labels;
      const char* classes[] = {"A", "B", "C"};
      for (const auto& c : ds.clips) {
        const auto pick = rng.below(4);
        if (pick < 3) labels.assign(c.id, classes[pick], 0, 0);
      }
      std::stringstream buffer;
      write_label_export(buffer, export_all_segments(ds, labels));
      const auto rebuilt = labels_from_segments(ds, read_label_export(buffer));
      std::size_t labeled = 0;
      for (const auto& c : ds.clips) {
        const auto expected = labels.label_of(c.id);
        const auto it = rebuilt.find(c.id);
        if (expected) {
          ++labeled;
          identity &= it != rebuilt.end() && it->second == *expected;
        }
      }
      identity &= rebuilt.size() == labeled;
    }
    o.require(identity, "segment export reconstructs 50 labelings");
  }
  return o;
}

Outcome determinism() {
  Outcome o;
  const auto data = testing::gaussian_clusters(3, 60, 20, 10.0, 4);
  TsneConfig config;
  config.perplexity = 15;
  config.iterations = 400;
  config.seed = 9;
  const Embedding a = run_tsne(data.features, config);
  const Embedding b = run_tsne(data.features, config);
  o.require(a == b, "run_tsne");

  const auto k1 = kmeans(a.points, 3, 5);
  const auto k2 = kmeans(a.points, 3, 5);
  o.require(k1.assignment == k2.assignment && k1.centroids == k2.centroids && k1.inertia == k2.inertia,
            "kmeans");

  const Session s(testing::make_dataset(50, 2, Matrix(100, 2)));
  const auto s1 = s.select_unlabeled_batch(12, 8);
  const auto s2 = s.select_unlabeled_batch(12, 8);
  o.require(s1.video_ids == s2.video_ids && s1.video_ids.size() == 12, "select_unlabeled_batch");
  return o;
}

}  // namespace
}  // namespace clipmap

int main() {
  using Check = std::pair<const char*, std::function<clipmap::Outcome()>>;
  const std::vector<Check> checks{
      {"affinity", clipmap::affinity},
      {"gradient", clipmap::gradient},
      {"embedding-quality", clipmap::embedding},
      {"metric-oracles", clipmap::metric_oracles},
      {"time-arithmetic", clipmap::time_arithmetic},
      {"lasso-geometry", clipmap::lasso},
      {"roundtrips", clipmap::roundtrips},
      {"determinism", clipmap::determinism},
  };
  int failures = 0;
  for (const auto& [name, run] : checks) {
    clipmap::Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, fmt::format("threw: {}", e.what())};
    }
    failures += !outcome.pass;
    fmt::print("{} {}: {}\n", outcome.pass ? "PASS" : "FAIL", name, outcome.detail);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
