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

#ifndef CLIPMAP_INGEST_HPP
#define CLIPMAP_INGEST_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include "json.hpp"

#include "clipmap/core.hpp"
#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"

/**
 * @file ingest.hpp
 *
 * @brief Loading of externally extracted clip features.
 *
 * A feature round is a JSON manifest plus a headerless blob of little-endian
 * float32 values, row-major, one row per manifest clip in manifest order.
 */

namespace clipmap {

namespace fs = std::filesystem;

struct ManifestClip {
  std::string video_id;
  std::int64_t clip_index = 0;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;
};

struct FeatureManifest {
  int version = 1;
  std::size_t dim = 0;
  std::string dtype = "f32le";
  std::vector<ManifestClip> clips;
  std::string blob_path;
  int round = 0;
  /// L2-normalize each feature row after loading.
  bool normalize = false;
  std::vector<VideoMeta> videos;
  /// clip id string -> middle-frame image path, relative to the manifest.
  std::map<std::string, std::string> thumbnails;
};

inline nlohmann::json to_json(const FeatureManifest& m) {
  nlohmann::json j;
  j["version"] = m.version;
  j["dim"] = m.dim;
  j["dtype"] = m.dtype;
  j["round"] = m.round;
  j["blob_path"] = m.blob_path;
  j["normalize"] = m.normalize;
  j["videos"] = nlohmann::json::array();
  for (const auto& v : m.videos)
    j["videos"].push_back({{"video_id", v.video_id},
                           {"fps", v.fps},
                           {"frame_count", v.frame_count},
                           {"source_path", v.source_path}});
  j["clips"] = nlohmann::json::array();
  for (const auto& c : m.clips)
    j["clips"].push_back({{"video_id", c.video_id},
                          {"clip_index", c.clip_index},
                          {"start_frame", c.start_frame},
                          {"end_frame", c.end_frame}});
  if (!m.thumbnails.empty()) j["thumbnails"] = m.thumbnails;
  return j;
}

inline FeatureManifest parse_manifest(const nlohmann::json& j) {
  FeatureManifest m;
  try {
    m.version = j.at("version").get<int>();
    m.dim = j.at("dim").get<std::size_t>();
    m.dtype = j.value("dtype", std::string("f32le"));
    m.round = j.value("round", 0);
    m.blob_path = j.at("blob_path").get<std::string>();
    m.normalize = j.value("normalize", false);
    if (j.contains("videos")) {
      for (const auto& v : j["videos"]) {
        VideoMeta meta;
        meta.video_id = v.at("video_id").get<std::string>();
        meta.fps = v.value("fps", 30.0);
        meta.frame_count = v.value("frame_count", std::int64_t{0});
        meta.source_path = v.value("source_path", std::string());
        m.videos.push_back(std::move(meta));
      }
    }
    for (const auto& c : j.at("clips")) {
      m.clips.push_back({c.at("video_id").get<std::string>(),
                         c.at("clip_index").get<std::int64_t>(),
                         c.at("start_frame").get<std::int64_t>(),
                         c.at("end_frame").get<std::int64_t>()});
    }
    if (j.contains("thumbnails"))
      m.thumbnails = j["thumbnails"].get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("manifest schema error: {}", e.what()));
  }
  if (m.version != 1)
    throw FormatError(fmt::format("unsupported manifest version {}", m.version));
  if (m.dim == 0) throw FormatError("manifest dim must be > 0");
  if (m.dtype != "f32le")
    throw FormatError(fmt::format("unsupported dtype '{}'", m.dtype));
  return m;
}

inline FeatureManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open manifest '{}'", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(
        fmt::format("manifest '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_manifest(j);
}

/// Writes `features` as raw little-endian float32, row-major.
inline void write_features(const fs::path& path, const Matrix& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  std::vector<char> bytes(features.data().size() * 4);
  std::size_t pos = 0;
  for (double v : features.data()) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int b = 0; b < 4; ++b) bytes[pos++] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("short write to '{}'", path.string()));
}

/// Reads a rows x dim float32 blob. Size must match exactly.
inline Matrix read_features(const fs::path& path, std::size_t rows, std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open feature blob '{}'", path.string()));
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  const std::size_t expected = rows * dim * 4;
  if (bytes.size() != expected)
    throw FormatError(fmt::format(
        "feature blob '{}' has {} bytes, expected {} ({} clips x {} dims x 4)",
        path.string(), bytes.size(), expected, rows, dim));
  Matrix m(rows, dim);
  auto data = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b]))
              << (8 * b);
    data[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return m;
}

namespace detail {

inline void validate_clip_layout(const std::vector<ClipRecord>& clips) {
  std::map<std::string, const ClipRecord*> last;
  std::int64_t window = -1;
  for (const auto& c : clips) {
    if (c.start_frame < 0 || c.end_frame <= c.start_frame)
      throw ValidationError(fmt::format("clip {} has empty frame range", c.id.str()));
    if (window < 0) window = c.time_steps();
    if (c.time_steps() != window)
      throw ValidationError(fmt::format(
          "clip {} spans {} frames; dataset window is {}", c.id.str(),
          c.time_steps(), window));
    auto& prev = last[c.video_id()];
    if (prev && (c.clip_index() <= prev->clip_index() ||
                 c.start_frame < prev->end_frame))
      throw ValidationError(fmt::format(
          "clip {} is out of order or overlaps {}", c.id.str(), prev->id.str()));
    prev = &c;
  }
}

inline void l2_normalize_rows(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& v : row) v /= norm;
  }
}

}  // namespace detail

/// Builds a dataset from a manifest whose relative paths resolve against
/// `base_dir`.
inline Dataset load_dataset(const FeatureManifest& m, const fs::path& base_dir) {
  Dataset ds;
  ds.feature_round = m.round;
  for (const auto& v : m.videos) {
    if (!(v.fps > 0.0))
      throw ValidationError(fmt::format("video '{}' has non-positive fps", v.video_id));
    if (v.frame_count < 0)
      throw ValidationError(fmt::format("video '{}' has negative frame_count", v.video_id));
    if (!ds.videos.emplace(v.video_id, v).second)
      throw ValidationError(fmt::format("duplicate video id '{}'", v.video_id));
  }
  ds.clips.reserve(m.clips.size());
  for (const auto& c : m.clips) {
    ClipRecord rec;
    rec.id = {c.video_id, c.clip_index};
    rec.start_frame = c.start_frame;
    rec.end_frame = c.end_frame;
    if (auto it = m.thumbnails.find(rec.id.str()); it != m.thumbnails.end()) {
      const fs::path thumb = base_dir / it->second;
      if (!fs::exists(thumb))
        throw IoError(fmt::format("thumbnail '{}' for clip {} does not exist",
                                  thumb.string(), rec.id.str()));
      rec.thumbnail_ref = thumb.string();
    }
    if (!ds.videos.contains(c.video_id)) {
      // Manifests without a videos table: default 30 fps, length from clips.
      VideoMeta meta;
      meta.video_id = c.video_id;
      ds.videos.emplace(c.video_id, meta);
    }
    auto& meta = ds.videos[c.video_id];
    if (m.videos.empty()) meta.frame_count = std::max(meta.frame_count, c.end_frame);
    ds.clips.push_back(std::move(rec));
  }
  detail::validate_clip_layout(ds.clips);
  ds.reindex();

  ds.features = read_features(base_dir / m.blob_path, m.clips.size(), m.dim);
  for (std::size_t i = 0; i < ds.features.rows(); ++i) {
    for (double v : ds.features.row(i)) {
      if (!std::isfinite(v))
        throw ValidationError(fmt::format(
            "non-finite feature value in row {} (video '{}', clip_index {})", i,
            ds.clips[i].video_id(), ds.clips[i].clip_index()));
    }
  }
  if (m.normalize) detail::l2_normalize_rows(ds.features);
  return ds;
}

inline Dataset load_dataset(const fs::path& manifest_path) {
  return load_dataset(read_manifest(manifest_path), manifest_path.parent_path());
}

/// Loads the next feature round. The new manifest must cover every clip of
/// `current` with the same feature dimension; it may add clips. Labels live
/// outside the dataset and are keyed by clip id, so they carry over.
inline Dataset refresh_features(const Dataset& current, const fs::path& manifest_path) {
  const FeatureManifest m = read_manifest(manifest_path);
  if (current.size() > 0 && m.dim != current.dim())
    throw RefreshError(fmt::format(
        "feature dimension changed from {} to {}", current.dim(), m.dim));
  std::set<ClipId> incoming;
  for (const auto& c : m.clips) incoming.insert({c.video_id, c.clip_index});
  std::vector<std::string> missing;
  for (const auto& c : current.clips)
    if (!incoming.contains(c.id)) missing.push_back(c.id.str());
  if (!missing.empty())
    throw RefreshError(fmt::format("new manifest is missing clips: {}",
                                   fmt::join(missing, ", ")));
  Dataset next = load_dataset(m, manifest_path.parent_path());
  for (const auto& c : current.clips) {
    const auto row = next.find(c.id);
    const auto& nc = next.clips[*row];
    if (nc.start_frame != c.start_frame || nc.end_frame != c.end_frame)
      throw RefreshError(fmt::format("clip {} changed frame range", c.id.str()));
  }
  next.feature_round = current.feature_round + 1;
  return next;
}

/// Writes `ds` as manifest + blob into `dir`. Returns the manifest path.
inline fs::path write_dataset(const Dataset& ds, const fs::path& dir,
                              const std::string& stem = "features") {
  fs::create_directories(dir);
  FeatureManifest m;
  m.dim = ds.dim();
  m.round = ds.feature_round;
  m.blob_path = stem + ".f32";
  for (const auto& [id, v] : ds.videos) m.videos.push_back(v);
  for (const auto& c : ds.clips) {
    m.clips.push_back({c.video_id(), c.clip_index(), c.start_frame, c.end_frame});
    if (!c.thumbnail_ref.empty())
      m.thumbnails[c.id.str()] =
          fs::relative(fs::absolute(c.thumbnail_ref), fs::absolute(dir)).string();
  }
  write_features(dir / m.blob_path, ds.features);
  const fs::path manifest_path = dir / (stem + ".json");
  std::ofstream out(manifest_path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", manifest_path.string()));
  out << to_json(m).dump(2) << "\n";
  return manifest_path;
}

}  // namespace clipmap

#endif  // CLIPMAP_INGEST_HPP
