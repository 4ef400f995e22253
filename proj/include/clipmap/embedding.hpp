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

#ifndef CLIPMAP_EMBEDDING_HPP
#define CLIPMAP_EMBEDDING_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include "json.hpp"

#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"

namespace clipmap {

/// Optimization settings. Iteration counts include the exaggeration phase.
struct TsneConfig {
  double perplexity = 30.0;
  double early_exaggeration = 12.0;
  double learning_rate = 200.0;
  int iterations = 2500;
  double theta = 0.5;
  int exaggeration_iters = 250;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(perplexity >= 1.0)) throw ParameterError("perplexity must be >= 1");
    if (!(early_exaggeration > 0.0))
      throw ParameterError("early_exaggeration must be positive");
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
    if (iterations < 1) throw ParameterError("iterations must be >= 1");
    if (!(theta >= 0.0 && theta <= 1.0)) throw ParameterError("theta must lie in [0, 1]");
    if (exaggeration_iters < 0) throw ParameterError("exaggeration_iters must be >= 0");
    if (!std::isfinite(momentum_initial) || !std::isfinite(momentum_final))
      throw ParameterError("momentum must be finite");
  }

  bool operator==(const TsneConfig&) const = default;
};

inline nlohmann::json to_json(const TsneConfig& c) {
  return {{"perplexity", c.perplexity},
          {"early_exaggeration", c.early_exaggeration},
          {"learning_rate", c.learning_rate},
          {"iterations", c.iterations},
          {"theta", c.theta},
          {"exaggeration_iters", c.exaggeration_iters},
          {"momentum_initial", c.momentum_initial},
          {"momentum_final", c.momentum_final},
          {"seed", c.seed}};
}

inline TsneConfig tsne_config_from_json(const nlohmann::json& j) {
  TsneConfig c;
  c.perplexity = j.value("perplexity", c.perplexity);
  c.early_exaggeration = j.value("early_exaggeration", c.early_exaggeration);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.iterations = j.value("iterations", c.iterations);
  c.theta = j.value("theta", c.theta);
  c.exaggeration_iters = j.value("exaggeration_iters", c.exaggeration_iters);
  c.momentum_initial = j.value("momentum_initial", c.momentum_initial);
  c.momentum_final = j.value("momentum_final", c.momentum_final);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// 2D coordinates aligned with dataset clip order.
struct Embedding {
  std::string method = "tsne";  // "tsne" or "pca"
  std::vector<Point2> points;
  std::vector<std::pair<int, double>> kl_trace;
  TsneConfig config;
  std::vector<double> component_variances;  // pca only, descending

  bool operator==(const Embedding&) const = default;
};

inline nlohmann::json to_json(const Embedding& e) {
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& p : e.points) j["points"].push_back({p.x, p.y});
  j["kl_trace"] = nlohmann::json::array();
  for (const auto& [iter, kl] : e.kl_trace) j["kl_trace"].push_back({iter, kl});
  nlohmann::json config = e.method == "pca" ? nlohmann::json::object() : to_json(e.config);
  config["method"] = e.method;
  if (!e.component_variances.empty())
    config["component_variances"] = e.component_variances;
  j["config"] = std::move(config);
  return j;
}

inline Embedding embedding_from_json(const nlohmann::json& j) {
  Embedding e;
  try {
    for (const auto& p : j.at("points")) e.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    for (const auto& t : j.at("kl_trace"))
      e.kl_trace.emplace_back(t.at(0).get<int>(), t.at(1).get<double>());
    const auto& config = j.at("config");
    e.method = config.value("method", std::string("tsne"));
    if (e.method != "pca") e.config = tsne_config_from_json(config);
    if (config.contains("component_variances"))
      e.component_variances = config["component_variances"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(fmt::format("embedding schema error: {}", ex.what()));
  }
  for (const auto& p : e.points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError("embedding contains non-finite coordinates");
  return e;
}

inline void save_embedding(const std::filesystem::path& path, const Embedding& e) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << to_json(e).dump() << "\n";
}

inline Embedding load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open embedding '{}'", path.string()));
  try {
    return embedding_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw FormatError(fmt::format("embedding '{}' is not valid JSON: {}", path.string(), ex.what()));
  }
}

}  // namespace clipmap

#endif  // CLIPMAP_EMBEDDING_HPP
