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

#ifndef CLIPMAP_TSNE_HPP
#define CLIPMAP_TSNE_HPP

#include <cmath>
#include <functional>
#include <stop_token>
#include <vector>

#include <fmt/format.h>

#include "clipmap/affinity.hpp"
#include "clipmap/embedding.hpp"
#include "clipmap/errors.hpp"
#include "clipmap/gradient.hpp"
#include "clipmap/matrix.hpp"
#include "clipmap/random.hpp"

/**
 * @file tsne.hpp
 *
 * @brief Barnes-Hut t-SNE.
 *
 * Gradient descent with momentum and per-coordinate adaptive gains on
 * KL(P || Q). P is multiplied by the exaggeration factor for the first
 * `exaggeration_iters` iterations, during which the initial momentum is used.
 * The divergence is recorded every 50 iterations and at the last one.
 */

namespace clipmap {

inline constexpr int kKlTraceInterval = 50;
inline constexpr double kInitialSpread = 1e-4;
inline constexpr double kMinGain = 0.01;

/// Raised when the optimization leaves the finite range. Carries the trace
/// recorded so far.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& what, std::vector<std::pair<int, double>> trace)
      : NumericError(what), kl_trace(std::move(trace)) {}
  std::vector<std::pair<int, double>> kl_trace;
};

/// Called after every iteration with (completed, total).
using TsneProgress = std::function<void(int, int)>;

inline std::vector<Point2> gaussian_init(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point2> y(n);
  for (auto& p : y) {
    p.x = kInitialSpread * rng.normal();
    p.y = kInitialSpread * rng.normal();
  }
  return y;
}

/// Runs the optimizer from a precomputed affinity matrix.
inline Embedding run_tsne(const AffinityMatrix& p, const TsneConfig& config,
                          std::stop_token stop = {}, const TsneProgress& progress = {}) {
  config.validate();
  const std::size_t n = p.n;
  Embedding out;
  out.config = config;
  out.points = gaussian_init(n, config.seed);
  std::vector<Point2>& y = out.points;
  std::vector<Point2> update(n), gains(n, {1.0, 1.0});

  auto gain = [](double g, double grad, double upd) {
    // Grow when the gradient opposes the previous step, shrink otherwise.
    return (grad > 0.0) != (upd > 0.0) ? g + 0.2 : std::max(g * 0.8, kMinGain);
  };

  for (int iter = 0; iter < config.iterations; ++iter) {
    if (stop.stop_requested()) throw CancelledError();
    const bool exaggerating = iter < config.exaggeration_iters;
    const double exaggeration = exaggerating ? config.early_exaggeration : 1.0;
    const double momentum = exaggerating ? config.momentum_initial : config.momentum_final;

    const GradientResult g = bh_gradient(p, y, config.theta, exaggeration);
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      gains[i].x = gain(gains[i].x, g.grad[i].x, update[i].x);
      gains[i].y = gain(gains[i].y, g.grad[i].y, update[i].y);
      update[i].x = momentum * update[i].x - config.learning_rate * gains[i].x * g.grad[i].x;
      update[i].y = momentum * update[i].y - config.learning_rate * gains[i].y * g.grad[i].y;
      y[i].x += update[i].x;
      y[i].y += update[i].y;
      cx += y[i].x;
      cy += y[i].y;
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    bool finite = true;
    for (auto& pt : y) {
      pt.x -= cx;
      pt.y -= cy;
      finite = finite && std::isfinite(pt.x) && std::isfinite(pt.y);
    }
    const int done = iter + 1;
    if (!finite)
      throw DivergenceError(fmt::format("t-SNE diverged at iteration {}", done),
                            out.kl_trace);
    if (done % kKlTraceInterval == 0 || done == config.iterations) {
      const double kl = bh_kl_divergence(p, y, config.theta);
      out.kl_trace.emplace_back(done, kl);
      if (!std::isfinite(kl))
        throw DivergenceError(
            fmt::format("KL divergence is not finite at iteration {}", done), out.kl_trace);
    }
    if (progress) progress(done, config.iterations);
  }
  return out;
}

/// Affinities plus optimization. Deterministic for a fixed seed.
inline Embedding run_tsne(const Matrix& features, const TsneConfig& config,
                          std::stop_token stop = {}, const TsneProgress& progress = {}) {
  config.validate();
  const AffinityMatrix p = joint_affinities(features, config.perplexity);
  return run_tsne(p, config, std::move(stop), progress);
}

}  // namespace clipmap

#endif  // CLIPMAP_TSNE_HPP
