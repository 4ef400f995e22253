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

#ifndef CLIPMAP_GRADIENT_HPP
#define CLIPMAP_GRADIENT_HPP

#include <cmath>
#include <span>
#include <vector>

#include "clipmap/affinity.hpp"
#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"
#include "clipmap/quadtree.hpp"

/**
 * @file gradient.hpp
 *
 * @brief Gradient of KL(P || Q) for the Student-t (one degree of freedom)
 * output kernel, w_ij = 1 / (1 + |y_i - y_j|^2), q_ij = w_ij / Z:
 *
 *   dC/dy_i = 4 sum_j (p_ij - q_ij) w_ij (y_i - y_j)
 *
 * split into an attraction term over the sparse P and a repulsion term
 * -4 / Z * sum_j w_ij^2 (y_i - y_j).
 */

namespace clipmap {

struct GradientResult {
  std::vector<Point2> grad;
  double z = 0.0;  // sum over ordered pairs i != j of w_ij
};

namespace detail {

/// 4 * scale * sum_j p_ij w_ij (y_i - y_j), accumulated into `grad`.
inline void add_attraction(const AffinityMatrix& p, std::span<const Point2> y,
                           double scale, std::vector<Point2>& grad) {
  for (std::size_t i = 0; i < p.n; ++i) {
    double gx = 0.0, gy = 0.0;
    for (std::size_t e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      const Point2 other = y[p.col[e]];
      const double dx = y[i].x - other.x;
      const double dy = y[i].y - other.y;
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      gx += p.val[e] * w * dx;
      gy += p.val[e] * w * dy;
    }
    grad[i].x += 4.0 * scale * gx;
    grad[i].y += 4.0 * scale * gy;
  }
}

inline void check_shapes(const AffinityMatrix& p, std::span<const Point2> y) {
  if (p.n != y.size())
    throw ParameterError("affinity matrix and embedding sizes differ");
}

}  // namespace detail

/// Dense O(N^2) gradient. `exaggeration` scales P.
inline GradientResult exact_gradient(const AffinityMatrix& p, std::span<const Point2> y,
                                     double exaggeration = 1.0) {
  detail::check_shapes(p, y);
  const std::size_t n = y.size();
  GradientResult out;
  out.grad.assign(n, {});
  std::vector<Repulsion> rep(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i].x - y[j].x;
      const double dy = y[i].y - y[j].y;
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      const double ww = w * w;
      rep[i].fx += ww * dx;
      rep[i].fy += ww * dy;
      rep[j].fx -= ww * dx;
      rep[j].fy -= ww * dy;
      out.z += 2.0 * w;
    }
  }
  detail::add_attraction(p, y, exaggeration, out.grad);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad[i].x -= 4.0 * rep[i].fx / out.z;
    out.grad[i].y -= 4.0 * rep[i].fy / out.z;
  }
  return out;
}

/// Barnes-Hut gradient: exact attraction over sparse P, quadtree-approximated
/// repulsion. theta = 0 reproduces exact_gradient up to summation order.
inline GradientResult bh_gradient(const AffinityMatrix& p, std::span<const Point2> y,
                                  double theta, double exaggeration = 1.0) {
  detail::check_shapes(p, y);
  if (!(theta >= 0.0 && theta <= 1.0)) throw ParameterError("theta must lie in [0, 1]");
  const std::size_t n = y.size();
  GradientResult out;
  out.grad.assign(n, {});
  const QuadTree tree(y);
  std::vector<Repulsion> rep(n);
  for (std::size_t i = 0; i < n; ++i) {
    rep[i] = tree.repulsion(i, y[i], theta);
    out.z += rep[i].z;
  }
  detail::add_attraction(p, y, exaggeration, out.grad);
  for (std::size_t i = 0; i < n; ++i) {
    out.grad[i].x -= 4.0 * rep[i].fx / out.z;
    out.grad[i].y -= 4.0 * rep[i].fy / out.z;
  }
  return out;
}

/// KL(P || Q) = sum p_ij log(p_ij / q_ij) over stored entries, given the
/// normalizer Z. P is renormalized to sum to one, so an exaggerated matrix
/// reports the divergence of the underlying distribution.
inline double kl_divergence(const AffinityMatrix& p, std::span<const Point2> y,
                            double z) {
  detail::check_shapes(p, y);
  const double total = p.sum();
  double kl = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    for (std::size_t e = p.row_ptr[i]; e < p.row_ptr[i + 1]; ++e) {
      const double pij = p.val[e] / total;
      if (pij <= 0.0) continue;
      const double q = 1.0 / (1.0 + squared_distance(y[i], y[p.col[e]])) / z;
      kl += pij * std::log(pij / q);
    }
  }
  return kl;
}

/// KL with an exactly computed normalizer.
inline double exact_kl_divergence(const AffinityMatrix& p, std::span<const Point2> y) {
  double z = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = i + 1; j < y.size(); ++j)
      z += 2.0 / (1.0 + squared_distance(y[i], y[j]));
  return kl_divergence(p, y, z);
}

/// KL with the Barnes-Hut estimate of the normalizer.
inline double bh_kl_divergence(const AffinityMatrix& p, std::span<const Point2> y,
                               double theta) {
  const QuadTree tree(y);
  double z = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) z += tree.repulsion(i, y[i], theta).z;
  return kl_divergence(p, y, z);
}

}  // namespace clipmap

#endif  // CLIPMAP_GRADIENT_HPP
