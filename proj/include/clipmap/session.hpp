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

#ifndef CLIPMAP_SESSION_HPP
#define CLIPMAP_SESSION_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include "json.hpp"

#include "clipmap/core.hpp"
#include "clipmap/embedding.hpp"
#include "clipmap/errors.hpp"
#include "clipmap/ingest.hpp"
#include "clipmap/label_export.hpp"
#include "clipmap/lasso.hpp"
#include "clipmap/metrics.hpp"
#include "clipmap/random.hpp"

/**
 * @file session.hpp
 *
 * @brief The incremental annotation loop.
 *
 * Each round a batch of unlabeled videos is drawn, the annotator lassoes
 * groups of clips in the current embedding and names them, and the time spent
 * is logged. Advancing the round optionally loads refreshed features, after
 * which the embedding is recomputed. Labels are keyed by clip id and survive
 * every refresh.
 *
 * Session is a value type with a single writer. Concurrent access goes
 * through the server's command queue.
 */

namespace clipmap {

inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t hash = 0xcbf29ce484222325ull) {
  for (unsigned char b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

inline std::uint64_t fnv1a(std::string_view text) {
  return fnv1a({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

inline std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

/// Hash of the float32 image of a feature matrix.
inline std::uint64_t feature_hash(const Matrix& m) {
  std::uint64_t h = fnv1a(fmt::format("{}x{}", m.rows(), m.cols()));
  for (double v : m.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(bits),
                                         static_cast<unsigned char>(bits >> 8),
                                         static_cast<unsigned char>(bits >> 16),
                                         static_cast<unsigned char>(bits >> 24)};
    h = fnv1a(b, h);
  }
  return h;
}

struct ToaEntry {
  int round = 0;
  double seconds = 0.0;
  bool operator==(const ToaEntry&) const = default;
};

struct PaletteEntry {
  std::string class_name;
  std::string color;  // "#rrggbb"
  bool operator==(const PaletteEntry&) const = default;
};

inline constexpr std::array<std::string_view, 10> kClassColors = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

/// Color for points in the unlabeled pool.
inline constexpr std::string_view kUnlabeledColor = "#c8c8c8";

struct BatchSelection {
  std::vector<std::string> video_ids;  // sorted
  bool pool_exhausted = false;
};

struct LassoSelection {
  std::vector<ClipId> clip_ids;  // sorted
  std::optional<std::string> warning;
};

enum class AdvanceStatus { advanced, budget_exhausted };

/// An embedding together with the dataset whose clip order it follows.
struct EmbeddingView {
  std::shared_ptr<const Dataset> dataset;
  std::shared_ptr<const Embedding> embedding;

  explicit operator bool() const noexcept { return dataset && embedding; }
};

class Session {
 public:
  Session() : dataset_(std::make_shared<Dataset>()) {}
  explicit Session(Dataset dataset, std::string manifest_path = {})
      : dataset_(std::make_shared<const Dataset>(std::move(dataset))),
        manifest_path_(std::move(manifest_path)) {}

  // --- read access ---------------------------------------------------------

  const Dataset& dataset() const noexcept { return *dataset_; }
  std::shared_ptr<const Dataset> dataset_ptr() const noexcept { return dataset_; }
  const EmbeddingView& view() const noexcept { return view_; }
  bool embedding_stale() const noexcept { return embedding_stale_; }
  const LabelStore& labels() const noexcept { return labels_; }
  int round() const noexcept { return round_; }
  const std::vector<ToaEntry>& toa_log() const noexcept { return toa_log_; }
  const std::vector<PaletteEntry>& palette() const noexcept { return palette_; }
  std::optional<double> budget_seconds() const noexcept { return budget_seconds_; }
  const TsneConfig& tsne_config() const noexcept { return tsne_config_; }
  const std::string& manifest_path() const noexcept { return manifest_path_; }
  const std::string& embedding_path() const noexcept { return embedding_path_; }

  void set_budget_seconds(std::optional<double> budget) { budget_seconds_ = budget; }
  void set_tsne_config(const TsneConfig& config) {
    config.validate();
    tsne_config_ = config;
  }
  void set_embedding_path(std::string path) { embedding_path_ = std::move(path); }

  std::size_t labeled_count() const {
    std::size_t n = 0;
    for (const auto& c : dataset_->clips) n += labels_.is_labeled(c.id) ? 1 : 0;
    return n;
  }
  std::size_t unlabeled_count() const { return dataset_->size() - labeled_count(); }

  /// Current class per clip of `ds`, in clip order.
  std::vector<std::optional<std::string>> labels_for(const Dataset& ds) const {
    std::vector<std::optional<std::string>> out;
    out.reserve(ds.size());
    for (const auto& c : ds.clips) out.push_back(labels_.label_of(c.id));
    return out;
  }

  std::string color_of(const std::optional<std::string>& class_name) const {
    if (!class_name) return std::string(kUnlabeledColor);
    for (const auto& p : palette_)
      if (p.class_name == *class_name) return p.color;
    return std::string(kUnlabeledColor);
  }

  double cumulative_toa() const {
    double total = 0.0;
    for (const auto& e : toa_log_) total += e.seconds;
    return total;
  }

  /// Total video duration in minutes.
  double video_minutes() const {
    double total = 0.0;
    for (const auto& [id, v] : dataset_->videos)
      total += static_cast<double>(v.frame_count) / v.fps / 60.0;
    return total;
  }

  // --- annotation loop -----------------------------------------------------

  /// Draws up to `n_videos` videos uniformly without replacement from those
  /// with at least one unlabeled clip.
  BatchSelection select_unlabeled_batch(std::size_t n_videos, std::uint64_t seed) const {
    std::vector<std::string> candidates;
    for (const auto& [video_id, meta] : dataset_->videos) {
      for (std::size_t row : dataset_->clips_of(video_id)) {
        if (!labels_.is_labeled(dataset_->clips[row].id)) {
          candidates.push_back(video_id);
          break;
        }
      }
    }
    BatchSelection out;
    if (candidates.empty()) {
      out.pool_exhausted = true;
      return out;
    }
    Rng rng(seed);
    const std::size_t take = std::min(n_videos, candidates.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    out.video_ids.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(out.video_ids.begin(), out.video_ids.end());
    out.pool_exhausted = take == candidates.size();
    return out;
  }

  /// Clips of the current embedding whose point lies inside `polygon`.
  LassoSelection lasso_select(const LassoPolygon& polygon, bool only_unlabeled) const {
    if (!view_) throw ConflictError("no embedding available yet");
    LassoSelection out;
    if (polygon.degenerate()) {
      out.warning = "lasso polygon has zero area; nothing selected";
      return out;
    }
    const auto& clips = view_.dataset->clips;
    const auto& points = view_.embedding->points;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (only_unlabeled && labels_.is_labeled(clips[i].id)) continue;
      if (polygon.contains(points[i])) out.clip_ids.push_back(clips[i].id);
    }
    std::sort(out.clip_ids.begin(), out.clip_ids.end());
    return out;
  }

  /// Labels every listed clip with `class_name` at the current round. Either
  /// all clips are labeled or, if any id is unknown, none.
  void assign_label(std::span<const ClipId> clip_ids, const std::string& class_name,
                    std::int64_t timestamp_ms = now_ms()) {
    if (clip_ids.empty()) return;
    if (class_name.empty()) throw ValidationError("class name must be nonempty");
    if (class_name == kUnlabeled)
      throw ValidationError("class name '__unlabeled__' is reserved");
    std::vector<std::string> unknown;
    for (const auto& id : clip_ids)
      if (!dataset_->find(id)) unknown.push_back(id.str());
    if (!unknown.empty())
      throw NotFoundError(fmt::format("unknown clip ids: {}", fmt::join(unknown, ", ")));
    for (const auto& id : clip_ids) labels_.assign(id, class_name, round_, timestamp_ms);
    ensure_palette(class_name);
  }

  /// Moves to the next round. With a manifest, features are refreshed first;
  /// any refresh failure leaves the session untouched. Refused once the
  /// logged annotation time reaches the budget.
  AdvanceStatus advance_round(const std::optional<std::filesystem::path>& manifest = {}) {
    if (budget_exhausted()) return AdvanceStatus::budget_exhausted;
    if (manifest) {
      advance_round_to(std::make_shared<const Dataset>(refresh_features(*dataset_, *manifest)),
                       manifest);
    } else {
      advance_round_to(dataset_, std::nullopt);
    }
    return AdvanceStatus::advanced;
  }

  /// Advances with a dataset that was already refreshed elsewhere (for
  /// example by a background job). Does not consult the budget.
  void advance_round_to(std::shared_ptr<const Dataset> refreshed,
                        const std::optional<std::filesystem::path>& manifest) {
    if (refreshed != dataset_) {
      for (const auto& a : labels_.history())
        if (!refreshed->find(a.clip))
          throw RefreshError(fmt::format("refreshed dataset lacks labeled clip {}", a.clip.str()));
      dataset_ = std::move(refreshed);
      embedding_stale_ = true;
    }
    if (manifest) manifest_path_ = std::filesystem::absolute(*manifest).string();
    ++round_;
  }

  bool budget_exhausted() const {
    return budget_seconds_ && cumulative_toa() >= *budget_seconds_;
  }

  void record_toa(double seconds) {
    if (!(seconds >= 0.0) || !std::isfinite(seconds))
      throw ParameterError("annotation time must be a nonnegative number of seconds");
    toa_log_.push_back({round_, seconds});
  }

  /// Publishes an embedding computed for `dataset`.
  void set_embedding(std::shared_ptr<const Dataset> dataset, Embedding embedding) {
    if (!dataset || dataset->size() != embedding.points.size())
      throw ValidationError(fmt::format(
          "embedding has {} points for {} clips", embedding.points.size(),
          dataset ? dataset->size() : 0));
    view_.dataset = std::move(dataset);
    view_.embedding = std::make_shared<const Embedding>(std::move(embedding));
    embedding_stale_ = view_.dataset != dataset_;
  }

  void set_embedding(Embedding embedding) { set_embedding(dataset_, std::move(embedding)); }

  MetricsReport metrics(std::uint64_t kmeans_seed = 0) const {
    if (!view_) throw ConflictError("no embedding available yet");
    ReportOptions opt;
    opt.kmeans_seed = kmeans_seed;
    opt.video_minutes = video_minutes();
    opt.annotation_seconds = cumulative_toa();
    const auto names = labels_for(*view_.dataset);
    return compute_report(view_.embedding->points, names, opt);
  }

  SegmentMap export_segments() const { return export_all_segments(*dataset_, labels_); }

  // --- persistence ---------------------------------------------------------

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["round"] = round_;
    j["manifest_path"] = manifest_path_;
    j["embedding_path"] = embedding_path_;
    j["budget_seconds"] = budget_seconds_ ? nlohmann::json(*budget_seconds_) : nlohmann::json(nullptr);
    j["tsne_config"] = clipmap::to_json(tsne_config_);
    j["palette"] = nlohmann::json::array();
    for (const auto& p : palette_) j["palette"].push_back({{"class", p.class_name}, {"color", p.color}});
    j["label_history"] = nlohmann::json::array();
    for (const auto& a : labels_.history())
      j["label_history"].push_back({{"clip_id", a.clip.str()},
                                    {"label", a.class_name},
                                    {"round", a.round},
                                    {"assigned_at_ms", a.assigned_at_ms}});
    j["toa_log"] = nlohmann::json::array();
    for (const auto& e : toa_log_) j["toa_log"].push_back({e.round, e.seconds});
    j["hashes"] = {{"features", hex64(feature_hash(dataset_->features))},
                   {"tsne_config", hex64(fnv1a(clipmap::to_json(tsne_config_).dump()))}};
    return j;
  }

  /// Rebuilds a session around an already loaded dataset. The dataset must
  /// match the feature hash recorded at save time.
  static Session from_json(const nlohmann::json& j, Dataset dataset) {
    Session s(std::move(dataset));
    try {
      if (j.at("version").get<int>() != 1) throw FormatError("unsupported session version");
      s.round_ = j.at("round").get<int>();
      s.manifest_path_ = j.value("manifest_path", std::string());
      s.embedding_path_ = j.value("embedding_path", std::string());
      if (j.contains("budget_seconds") && !j["budget_seconds"].is_null())
        s.budget_seconds_ = j["budget_seconds"].get<double>();
      if (j.contains("tsne_config")) s.tsne_config_ = tsne_config_from_json(j["tsne_config"]);
      for (const auto& p : j.at("palette"))
        s.palette_.push_back({p.at("class").get<std::string>(), p.at("color").get<std::string>()});
      std::vector<LabelAssignment> history;
      for (const auto& a : j.at("label_history"))
        history.push_back({ClipId::parse(a.at("clip_id").get<std::string>()),
                           a.at("label").get<std::string>(), a.at("round").get<int>(),
                           a.at("assigned_at_ms").get<std::int64_t>()});
      s.labels_ = LabelStore::from_history(std::move(history));
      for (const auto& e : j.at("toa_log"))
        s.toa_log_.push_back({e.at(0).get<int>(), e.at(1).get<double>()});
      const std::string expected = j.at("hashes").at("features").get<std::string>();
      const std::string actual = hex64(feature_hash(s.dataset_->features));
      if (expected != actual)
        throw ValidationError(fmt::format(
            "features do not match the session (hash {} != {})", actual, expected));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("session schema error: {}", e.what()));
    }
    for (const auto& a : s.labels_.history())
      if (!s.dataset_->find(a.clip))
        throw ValidationError(fmt::format("session labels unknown clip {}", a.clip.str()));
    return s;
  }

  /// Writes the session JSON. Relative dataset and embedding paths in the
  /// file resolve against the session file's directory.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError(fmt::format("cannot write session '{}'", path.string()));
    out << to_json().dump(2) << "\n";
    if (!out) throw IoError(fmt::format("short write to '{}'", path.string()));
  }

  static Session load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open session '{}'", path.string()));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("session '{}' is not valid JSON: {}", path.string(), e.what()));
    }
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    const std::string manifest = j.value("manifest_path", std::string());
    if (manifest.empty()) throw FormatError("session has no manifest_path");
    Session s = from_json(j, load_dataset(resolve(manifest)));
    if (!s.embedding_path_.empty() && std::filesystem::exists(resolve(s.embedding_path_))) {
      Embedding e = load_embedding(resolve(s.embedding_path_));
      if (e.points.size() == s.dataset_->size()) {
        s.set_embedding(std::move(e));
      }
    }
    return s;
  }

  /// Stable digest of the persistent state.
  std::string snapshot_hash() const { return hex64(fnv1a(to_json().dump())); }

 private:
  void ensure_palette(const std::string& class_name) {
    for (const auto& p : palette_)
      if (p.class_name == class_name) return;
    palette_.push_back(
        {class_name, std::string(kClassColors[palette_.size() % kClassColors.size()])});
  }

  std::shared_ptr<const Dataset> dataset_;
  EmbeddingView view_;
  bool embedding_stale_ = true;
  LabelStore labels_;
  int round_ = 0;
  std::vector<ToaEntry> toa_log_;
  std::optional<double> budget_seconds_;
  std::vector<PaletteEntry> palette_;
  TsneConfig tsne_config_;
  std::string manifest_path_;
  std::string embedding_path_;
};

}  // namespace clipmap

#endif  // CLIPMAP_SESSION_HPP
