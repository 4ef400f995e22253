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

#ifndef CLIPMAP_CORE_HPP
#define CLIPMAP_CORE_HPP

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "clipmap/errors.hpp"
#include "clipmap/matrix.hpp"

/**
 * @file core.hpp
 *
 * @brief Videos, fixed-length clips, feature datasets and the label store.
 *
 * A video of F frames is cut into floor(F / n) clips of n consecutive frames.
 * Each clip is one data point: it carries a feature row and, once the
 * annotator has grouped it, one current class label.
 */

namespace clipmap {

/// Reserved class name for clips that sit in the unlabeled pool. Never exported.
inline constexpr std::string_view kUnlabeled = "__unlabeled__";

struct VideoMeta {
  std::string video_id;
  double fps = 30.0;
  std::int64_t frame_count = 0;
  std::string source_path;

  bool operator==(const VideoMeta&) const = default;
};

/// Stable clip identity: survives feature refreshes and manifest reordering.
struct ClipId {
  std::string video_id;
  std::int64_t clip_index = 0;

  auto operator<=>(const ClipId&) const = default;
  bool operator==(const ClipId&) const = default;

  std::string str() const { return fmt::format("{}:{}", video_id, clip_index); }

  static ClipId parse(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size())
      throw ParameterError(fmt::format("malformed clip id '{}'", text));
    ClipId id;
    id.video_id = std::string(text.substr(0, colon));
    std::int64_t index = 0;
    for (char c : text.substr(colon + 1)) {
      if (c < '0' || c > '9')
        throw ParameterError(fmt::format("malformed clip id '{}'", text));
      index = index * 10 + (c - '0');
    }
    id.clip_index = index;
    return id;
  }
};

inline std::ostream& operator<<(std::ostream& os, const ClipId& id) {
  return os << id.str();
}

/// One window of consecutive frames, half-open [start_frame, end_frame).
struct ClipRecord {
  ClipId id;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;
  std::string thumbnail_ref;

  std::int64_t time_steps() const noexcept { return end_frame - start_frame; }
  const std::string& video_id() const noexcept { return id.video_id; }
  std::int64_t clip_index() const noexcept { return id.clip_index; }

  bool operator==(const ClipRecord&) const = default;
};

/// Splits a video into non-overlapping windows of `time_steps` frames.
/// A trailing remainder shorter than one window is dropped.
inline std::vector<ClipRecord> make_clips(const VideoMeta& video,
                                          std::int64_t time_steps) {
  if (time_steps < 1) throw ParameterError("time_steps must be >= 1");
  if (video.frame_count < 0) throw ParameterError("frame_count must be >= 0");
  const std::int64_t count = video.frame_count / time_steps;
  std::vector<ClipRecord> clips;
  clips.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    ClipRecord clip;
    clip.id = {video.video_id, i};
    clip.start_frame = i * time_steps;
    clip.end_frame = (i + 1) * time_steps;
    clips.push_back(std::move(clip));
  }
  return clips;
}

/// Frame shown as the clip's thumbnail.
inline std::int64_t middle_frame(const ClipRecord& clip) {
  return clip.start_frame + clip.time_steps() / 2;
}

/// Clips plus their feature rows. Row i of `features` belongs to `clips[i]`.
struct Dataset {
  std::map<std::string, VideoMeta> videos;
  std::vector<ClipRecord> clips;
  Matrix features;
  int feature_round = 0;

  std::size_t size() const noexcept { return clips.size(); }
  std::size_t dim() const noexcept { return features.cols(); }

  /// Row lookup by clip id. Call reindex() after editing `clips`.
  std::optional<std::size_t> find(const ClipId& id) const {
    if (row_of_.size() == clips.size()) {
      const auto it = row_of_.find(id);
      if (it == row_of_.end()) return std::nullopt;
      return it->second;
    }
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i].id == id) return i;
    return std::nullopt;
  }

  void reindex() {
    row_of_.clear();
    for (std::size_t i = 0; i < clips.size(); ++i) row_of_.emplace(clips[i].id, i);
    if (row_of_.size() != clips.size())
      throw ValidationError("duplicate clip ids in dataset");
  }

  /// Row indices of one video's clips, in clip order.
  std::vector<std::size_t> clips_of(std::string_view video_id) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < clips.size(); ++i)
      if (clips[i].video_id() == video_id) rows.push_back(i);
    return rows;
  }

 private:
  std::map<ClipId, std::size_t> row_of_;
};

struct LabelAssignment {
  ClipId clip;
  std::string class_name;
  int round = 0;
  std::int64_t assigned_at_ms = 0;  // unix epoch milliseconds

  bool operator==(const LabelAssignment&) const = default;
};

inline std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch())
      .count();
}

/// Append-only label history with a current-label index per clip.
/// A later assignment to the same clip supersedes the earlier one.
class LabelStore {
 public:
  void assign(const ClipId& clip, std::string class_name, int round,
              std::int64_t assigned_at_ms) {
    if (class_name.empty()) throw ParameterError("class name must be nonempty");
    if (class_name == kUnlabeled)
      throw ParameterError("class name '__unlabeled__' is reserved");
    history_.push_back({clip, std::move(class_name), round, assigned_at_ms});
    current_[clip] = history_.size() - 1;
  }

  const LabelAssignment* current(const ClipId& clip) const {
    const auto it = current_.find(clip);
    return it == current_.end() ? nullptr : &history_[it->second];
  }

  std::optional<std::string> label_of(const ClipId& clip) const {
    if (const auto* a = current(clip)) return a->class_name;
    return std::nullopt;
  }

  bool is_labeled(const ClipId& clip) const { return current_.contains(clip); }

  std::size_t history_length(const ClipId& clip) const {
    std::size_t n = 0;
    for (const auto& a : history_)
      if (a.clip == clip) ++n;
    return n;
  }

  const std::vector<LabelAssignment>& history() const noexcept { return history_; }
  std::size_t labeled_count() const noexcept { return current_.size(); }

  /// Current assignments ordered by clip id.
  std::vector<LabelAssignment> current_assignments() const {
    std::vector<LabelAssignment> out;
    out.reserve(current_.size());
    for (const auto& [clip, index] : current_) out.push_back(history_[index]);
    return out;
  }

  static LabelStore from_history(std::vector<LabelAssignment> history) {
    LabelStore store;
    for (auto& a : history)
      store.assign(a.clip, std::move(a.class_name), a.round, a.assigned_at_ms);
    return store;
  }

  bool operator==(const LabelStore&) const = default;

 private:
  std::vector<LabelAssignment> history_;
  std::map<ClipId, std::size_t> current_;
};

/// A labeled time interval [start_s, end_s) of one video.
struct TemporalSegment {
  std::string video_id;
  std::string class_name;
  double start_s = 0.0;
  double end_s = 0.0;

  bool operator==(const TemporalSegment&) const = default;
};

/// Merges maximal runs of consecutive, frame-contiguous clips that share a
/// class into segments. Unlabeled clips break runs and produce nothing.
inline std::vector<TemporalSegment> export_segments(const Dataset& dataset,
                                                    const LabelStore& labels,
                                                    const std::string& video_id) {
  const auto video = dataset.videos.find(video_id);
  if (video == dataset.videos.end())
    throw NotFoundError(fmt::format("unknown video '{}'", video_id));
  const double fps = video->second.fps;

  std::vector<TemporalSegment> segments;
  std::int64_t run_end_frame = -1;  // end of the open run, -1 if none
  for (std::size_t row : dataset.clips_of(video_id)) {
    const ClipRecord& clip = dataset.clips[row];
    const auto label = labels.label_of(clip.id);
    if (!label) {
      run_end_frame = -1;
      continue;
    }
    const double start = static_cast<double>(clip.start_frame) / fps;
    const double end = static_cast<double>(clip.end_frame) / fps;
    if (run_end_frame == clip.start_frame &&
        segments.back().class_name == *label) {
      segments.back().end_s = end;
    } else {
      segments.push_back({video_id, *label, start, end});
    }
    run_end_frame = clip.end_frame;
  }
  return segments;
}

/// Segments for every video, keyed by video id. Videos with no labeled clips
/// map to an empty list.
inline std::map<std::string, std::vector<TemporalSegment>> export_all_segments(
    const Dataset& dataset, const LabelStore& labels) {
  std::map<std::string, std::vector<TemporalSegment>> out;
  for (const auto& [video_id, meta] : dataset.videos)
    out[video_id] = export_segments(dataset, labels, video_id);
  return out;
}

/// Reconstructs per-clip labels: each clip takes the class of the segment
/// covering its midpoint second. Clips not covered stay unlabeled.
inline std::map<ClipId, std::string> labels_from_segments(
    const Dataset& dataset,
    const std::map<std::string, std::vector<TemporalSegment>>& segments) {
  std::map<ClipId, std::string> out;
  for (const ClipRecord& clip : dataset.clips) {
    const auto video = dataset.videos.find(clip.video_id());
    const auto segs = segments.find(clip.video_id());
    if (video == dataset.videos.end() || segs == segments.end()) continue;
    const double mid =
        0.5 * static_cast<double>(clip.start_frame + clip.end_frame) /
        video->second.fps;
    for (const auto& s : segs->second) {
      if (s.start_s <= mid && mid < s.end_s) {
        out[clip.id] = s.class_name;
        break;
      }
    }
  }
  return out;
}

}  // namespace clipmap

#endif  // CLIPMAP_CORE_HPP
