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

#ifndef CLIPMAP_LASSO_HPP
#define CLIPMAP_LASSO_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"

namespace clipmap {

/// Closed polygon drawn by the lasso tool. The last vertex connects back to
/// the first.
class LassoPolygon {
 public:
  explicit LassoPolygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) throw ValidationError("lasso polygon needs at least 3 vertices");
    for (const auto& v : vertices_)
      if (!std::isfinite(v.x) || !std::isfinite(v.y))
        throw ValidationError("lasso polygon has non-finite vertices");
  }

  std::span<const Point2> vertices() const noexcept { return vertices_; }

  /// Shoelace area, sign dropped.
  double area() const {
    double twice = 0.0;
    for (std::size_t i = 0, j = vertices_.size() - 1; i < vertices_.size(); j = i++)
      twice += vertices_[j].x * vertices_[i].y - vertices_[i].x * vertices_[j].y;
    return 0.5 * std::abs(twice);
  }

  bool degenerate() const { return area() == 0.0; }

  /// Even-odd rule; points on an edge count as inside.
  bool contains(Point2 p) const {
    if (on_boundary(p)) return true;
    bool inside = false;
    for (std::size_t i = 0, j = vertices_.size() - 1; i < vertices_.size(); j = i++) {
      const Point2 a = vertices_[i];
      const Point2 b = vertices_[j];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double x_cross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
        if (p.x < x_cross) inside = !inside;
      }
    }
    return inside;
  }

  bool on_boundary(Point2 p) const {
    for (std::size_t i = 0, j = vertices_.size() - 1; i < vertices_.size(); j = i++)
      if (on_segment(p, vertices_[j], vertices_[i])) return true;
    return false;
  }

 private:
  static bool on_segment(Point2 p, Point2 a, Point2 b) {
    const double scale = 1.0 + std::max({std::abs(a.x), std::abs(a.y), std::abs(b.x),
                                         std::abs(b.y), std::abs(p.x), std::abs(p.y)});
    const double eps = 1e-12 * scale;
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) return std::sqrt(squared_distance(p, a)) <= eps;
    const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    const Point2 foot{a.x + t * dx, a.y + t * dy};
    return std::sqrt(squared_distance(p, foot)) <= eps;
  }

  std::vector<Point2> vertices_;
};

}  // namespace clipmap

#endif  // CLIPMAP_LASSO_HPP
