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

#ifndef CLIPMAP_LABEL_EXPORT_HPP
#define CLIPMAP_LABEL_EXPORT_HPP

#include <istream>
#include <sstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include "json.hpp"

#include "clipmap/core.hpp"
#include "clipmap/errors.hpp"

namespace clipmap {

using SegmentMap = std::map<std::string, std::vector<TemporalSegment>>;

/// Writes the label export document:
///   { "version": 1, "videos": { "<id>": [ {"label": c, "segment": [s, e]} ] } }
/// Segment times are printed with six fractional digits.
inline void write_label_export(std::ostream& os, const SegmentMap& segments) {
  using nlohmann::json;
  os << "{\n  \"version\": 1,\n  \"videos\": {";
  bool first_video = true;
  for (const auto& [video_id, segs] : segments) {
    os << (first_video ? "\n" : ",\n") << "    " << json(video_id).dump() << ": [";
    first_video = false;
    bool first_seg = true;
    for (const auto& s : segs) {
      os << (first_seg ? "\n" : ",\n")
         << fmt::format("      {{\"label\": {}, \"segment\": [{:.6f}, {:.6f}]}}",
                        json(s.class_name).dump(), s.start_s, s.end_s);
      first_seg = false;
    }
    os << (segs.empty() ? "]" : "\n    ]");
  }
  os << (segments.empty() ? "}\n}\n" : "\n  }\n}\n");
}

inline std::string label_export_string(const SegmentMap& segments) {
  std::ostringstream os;
  write_label_export(os, segments);
  return os.str();
}

inline SegmentMap read_label_export(std::istream& is) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("label export is not valid JSON: {}", e.what()));
  }
  if (!doc.is_object() || doc.value("version", 0) != 1 ||
      !doc.contains("videos") || !doc["videos"].is_object())
    throw FormatError("label export must be a version 1 document with 'videos'");
  SegmentMap out;
  for (const auto& [video_id, segs] : doc["videos"].items()) {
    auto& list = out[video_id];
    for (const auto& s : segs) {
      if (!s.contains("label") || !s.contains("segment") ||
          !s["segment"].is_array() || s["segment"].size() != 2)
        throw FormatError(fmt::format("malformed segment in video '{}'", video_id));
      TemporalSegment seg{video_id, s["label"].get<std::string>(),
                          s["segment"][0].get<double>(),
                          s["segment"][1].get<double>()};
      if (!(seg.start_s >= 0.0 && seg.start_s < seg.end_s))
        throw ValidationError(
            fmt::format("segment [{}, {}) of '{}' is empty or negative",
                        seg.start_s, seg.end_s, video_id));
      if (!list.empty() && seg.start_s < list.back().end_s)
        throw ValidationError(
            fmt::format("segments of '{}' overlap or are unsorted", video_id));
      list.push_back(std::move(seg));
    }
  }
  return out;
}

}  // namespace clipmap

#endif  // CLIPMAP_LABEL_EXPORT_HPP
