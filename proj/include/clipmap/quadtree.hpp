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

#ifndef CLIPMAP_QUADTREE_HPP
#define CLIPMAP_QUADTREE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "clipmap/matrix.hpp"

namespace clipmap {

/// Repulsive-force accumulator for one query point.
struct Repulsion {
  double fx = 0.0;  // sum over others of w^2 (y_i - y_j), w = 1 / (1 + |y_i - y_j|^2)
  double fy = 0.0;
  double z = 0.0;   // sum over others of w
};

/**
 * Region quadtree over 2D points for Barnes-Hut summation.
 *
 * Cells are squares obtained by recursive halving of the root bounding
 * square, so the partition depends only on the point set, not on the order
 * points are given in. Leaves hold one point, or several when they coincide
 * or the depth limit is reached. The point span must outlive the tree.
 */
class QuadTree {
 public:
  static constexpr int kMaxDepth = 48;
  static constexpr std::int32_t kNone = -1;

  struct Node {
    double cx = 0.0, cy = 0.0;  // cell center
    double half = 0.0;          // half side length
    double com_x = 0.0, com_y = 0.0;
    std::size_t count = 0;
    std::array<std::int32_t, 4> children{kNone, kNone, kNone, kNone};
    std::vector<std::uint32_t> points;  // leaf members; empty for internal nodes

    bool is_leaf() const noexcept {
      return children[0] == kNone && children[1] == kNone &&
             children[2] == kNone && children[3] == kNone;
    }
    /// Cell diagonal.
    double diameter() const noexcept { return 2.0 * half * std::numbers::sqrt2; }
  };

  QuadTree() = default;

  explicit QuadTree(std::span<const Point2> points) : points_(points) {
    if (points.empty()) return;
    double min_x = points[0].x, max_x = points[0].x;
    double min_y = points[0].y, max_y = points[0].y;
    for (const auto& p : points) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    Node root;
    root.cx = 0.5 * (min_x + max_x);
    root.cy = 0.5 * (min_y + max_y);
    root.half = 0.5 * std::max(max_x - min_x, max_y - min_y) + 1e-12;
    nodes_.reserve(2 * points.size());
    nodes_.push_back(root);
    std::vector<std::uint32_t> all(points.size());
    for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
    build(0, std::move(all), 0);
  }

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  bool empty() const noexcept { return nodes_.empty(); }

  /// Barnes-Hut repulsion on point `self` at `at`. A cell is summarized by its
  /// center of mass when diameter / distance < theta; leaves are summed
  /// exactly, skipping `self`. theta = 0 therefore gives the exact sum.
  Repulsion repulsion(std::size_t self, Point2 at, double theta) const {
    Repulsion acc;
    if (nodes_.empty()) return acc;
    std::vector<std::int32_t> stack;
    stack.reserve(64);
    stack.push_back(0);
    while (!stack.empty()) {
      const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
      stack.pop_back();
      if (node.count == 0) continue;
      if (node.is_leaf()) {
        for (std::uint32_t j : node.points) {
          if (j == self) continue;
          add(acc, at, points_[j], 1.0);
        }
        continue;
      }
      const double dx = at.x - node.com_x;
      const double dy = at.y - node.com_y;
      const double dist2 = dx * dx + dy * dy;
      const double diam = node.diameter();
      if (dist2 > 0.0 && diam * diam < theta * theta * dist2) {
        add(acc, at, {node.com_x, node.com_y}, static_cast<double>(node.count));
        continue;
      }
      for (std::int32_t c : node.children)
        if (c != kNone) stack.push_back(c);
    }
    return acc;
  }

 private:
  static void add(Repulsion& acc, Point2 at, Point2 other, double mass) {
    const double dx = at.x - other.x;
    const double dy = at.y - other.y;
    const double w = 1.0 / (1.0 + dx * dx + dy * dy);
    acc.z += mass * w;
    const double ww = mass * w * w;
    acc.fx += ww * dx;
    acc.fy += ww * dy;
  }

  void build(std::size_t node_index, std::vector<std::uint32_t> members, int depth) {
    {
      Node& node = nodes_[node_index];
      node.count = members.size();
      double sx = 0.0, sy = 0.0;
      for (std::uint32_t i : members) {
        sx += points_[i].x;
        sy += points_[i].y;
      }
      node.com_x = sx / static_cast<double>(members.size());
      node.com_y = sy / static_cast<double>(members.size());
    }
    const bool coincident = std::all_of(members.begin(), members.end(), [&](std::uint32_t i) {
      return points_[i] == points_[members.front()];
    });
    if (members.size() == 1 || coincident || depth >= kMaxDepth) {
      nodes_[node_index].points = std::move(members);
      return;
    }
    const Node parent = nodes_[node_index];
    std::array<std::vector<std::uint32_t>, 4> parts;
    for (std::uint32_t i : members) {
      const int q = (points_[i].x >= parent.cx ? 1 : 0) + (points_[i].y >= parent.cy ? 2 : 0);
      parts[static_cast<std::size_t>(q)].push_back(i);
    }
    members.clear();
    members.shrink_to_fit();
    for (int q = 0; q < 4; ++q) {
      auto& part = parts[static_cast<std::size_t>(q)];
      if (part.empty()) continue;
      Node child;
      child.half = 0.5 * parent.half;
      child.cx = parent.cx + ((q & 1) ? child.half : -child.half);
      child.cy = parent.cy + ((q & 2) ? child.half : -child.half);
      nodes_.push_back(child);
      const auto child_index = static_cast<std::int32_t>(nodes_.size() - 1);
      nodes_[node_index].children[static_cast<std::size_t>(q)] = child_index;
      build(static_cast<std::size_t>(child_index), std::move(part), depth + 1);
    }
  }

  std::span<const Point2> points_;
  std::vector<Node> nodes_;
};

}  // namespace clipmap

#endif  // CLIPMAP_QUADTREE_HPP
