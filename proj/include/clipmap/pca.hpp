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

#ifndef CLIPMAP_PCA_HPP
#define CLIPMAP_PCA_HPP

#include <cmath>

// <resolv.h> (pulled in by the HTTP layer) defines `_res`, which Eigen
// uses as an identifier.
#pragma push_macro("_res")
#undef _res
#include <Eigen/Dense>
#pragma pop_macro("_res")

#include "clipmap/embedding.hpp"
#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"

namespace clipmap {

/// Linear baseline: projection of the mean-centered features onto the two
/// leading principal directions. Each axis is signed so that its
/// largest-magnitude coordinate is positive.
///
/// For rank-one input the second direction is an arbitrary unit vector
/// orthogonal to the first and every second coordinate is zero.
inline Embedding pca2(const Matrix& features) {
  const auto n = static_cast<Eigen::Index>(features.rows());
  const auto d = static_cast<Eigen::Index>(features.cols());
  if (n < 2) throw ParameterError("PCA needs at least two points");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      x(features.data().data(), n, d);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const Eigen::MatrixXd& u = svd.matrixU();

  Embedding out;
  out.method = "pca";
  out.points.resize(static_cast<std::size_t>(n));
  for (int axis = 0; axis < 2; ++axis) {
    const double s = axis < sv.size() ? sv(axis) : 0.0;
    Eigen::VectorXd coord = axis < u.cols() ? Eigen::VectorXd(u.col(axis) * s)
                                            : Eigen::VectorXd::Zero(n);
    Eigen::Index arg = 0;
    coord.cwiseAbs().maxCoeff(&arg);
    if (coord(arg) < 0.0) coord = -coord;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& p = out.points[static_cast<std::size_t>(i)];
      (axis == 0 ? p.x : p.y) = coord(i);
    }
    out.component_variances.push_back(s * s / static_cast<double>(n - 1));
  }
  return out;
}

}  // namespace clipmap

#endif  // CLIPMAP_PCA_HPP
