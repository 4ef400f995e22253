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

#ifndef CLIPMAP_SERVER_HPP
#define CLIPMAP_SERVER_HPP

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include "httplib.h"
#include "json.hpp"

#include "clipmap/core.hpp"
#include "clipmap/errors.hpp"
#include "clipmap/ingest.hpp"
#include "clipmap/label_export.hpp"
#include "clipmap/lasso.hpp"
#include "clipmap/session.hpp"
#include "clipmap/tsne.hpp"

/**
 * @file server.hpp
 *
 * @brief JSON-over-HTTP front end for one annotation session.
 *
 * Reads take a shared lock and never wait for background work; mutations
 * take the exclusive lock and apply to a copy that replaces the session only
 * on success. At most one background job (feature refresh and/or embedding)
 * runs at a time; it works on an immutable dataset snapshot and swaps its
 * result in under the exclusive lock.
 */

namespace clipmap {

enum class JobKind { embed, refresh };
enum class JobState { queued, running, done, failed };

inline const char* to_string(JobKind k) { return k == JobKind::embed ? "embed" : "refresh"; }

inline const char* to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

struct JobStatus {
  std::string job_id;
  JobKind kind = JobKind::embed;
  JobState state = JobState::queued;
  double progress = 0.0;
  std::string message;
};

inline nlohmann::json to_json(const JobStatus& s) {
  return {{"job_id", s.job_id},
          {"kind", to_string(s.kind)},
          {"state", to_string(s.state)},
          {"progress", s.progress},
          {"message", s.message}};
}

/// Handler result: HTTP status plus JSON body (or raw bytes for files).
struct ApiResponse {
  ApiResponse() = default;
  ApiResponse(int status_code, nlohmann::json json_body)
      : status(status_code), body(std::move(json_body)) {}

  int status = 200;
  nlohmann::json body;
  std::string raw;           // when nonempty, sent instead of body
  std::string content_type = "application/json";
};

inline ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"error", code}, {"message", message}}};
}

inline int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::budget_exhausted: return 409;
    case ErrorKind::io: return 500;
    case ErrorKind::numeric: return 500;
    case ErrorKind::cancelled: return 503;
  }
  return 500;
}

class AnnotationServer {
 public:
  struct Options {
    /// When set, the session is written here after every successful mutation.
    std::optional<std::filesystem::path> autosave_path;
    /// Where finished embeddings are written (recorded in the session).
    std::optional<std::filesystem::path> embedding_path;
    std::uint64_t kmeans_seed = 0;
  };

  explicit AnnotationServer(Session session) : AnnotationServer(std::move(session), Options{}) {}
  AnnotationServer(Session session, Options options)
      : session_(std::move(session)), options_(std::move(options)) {}

  ~AnnotationServer() {
    if (worker_.joinable()) {
      worker_.request_stop();
      worker_.join();
    }
  }

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // --- endpoints -----------------------------------------------------------

  /// GET /api/session
  ApiResponse get_session() const {
    std::shared_lock lock(mutex_);
    nlohmann::json j;
    j["round"] = session_.round();
    j["clips"] = session_.dataset().size();
    j["videos"] = session_.dataset().videos.size();
    j["labeled"] = session_.labeled_count();
    j["unlabeled"] = session_.unlabeled_count();
    j["embedding_ready"] = static_cast<bool>(session_.view());
    j["embedding_stale"] = session_.embedding_stale();
    j["cumulative_toa_seconds"] = session_.cumulative_toa();
    j["budget_seconds"] = session_.budget_seconds() ? nlohmann::json(*session_.budget_seconds())
                                                    : nlohmann::json(nullptr);
    j["toa_log"] = nlohmann::json::array();
    for (const auto& e : session_.toa_log()) j["toa_log"].push_back({e.round, e.seconds});
    j["palette"] = nlohmann::json::array();
    for (const auto& p : session_.palette())
      j["palette"].push_back({{"class", p.class_name}, {"color", p.color}});
    j["unlabeled_color"] = kUnlabeledColor;
    j["active_job"] = active_job_id_locked();
    return {200, std::move(j)};
  }

  /// GET /api/embedding
  ApiResponse get_embedding() const {
    std::shared_lock lock(mutex_);
    const EmbeddingView& view = session_.view();
    if (!view)
      return {409, {{"error", "not_ready"},
                    {"message", "no embedding has been computed yet"},
                    {"job_id", active_job_id_locked()}}};
    nlohmann::json points = nlohmann::json::array();
    const auto& clips = view.dataset->clips;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto label = session_.labels().label_of(clips[i].id);
      const Point2 p = view.embedding->points[i];
      points.push_back({{"clip_id", clips[i].id.str()},
                        {"x", p.x},
                        {"y", p.y},
                        {"label", label ? *label : std::string(kUnlabeled)},
                        {"color", session_.color_of(label)},
                        {"thumbnail_url", clips[i].thumbnail_ref.empty()
                                              ? nlohmann::json(nullptr)
                                              : nlohmann::json("/thumbs/" + clips[i].id.str())}});
    }
    return {200,
            {{"round", session_.round()},
             {"stale", session_.embedding_stale()},
             {"method", view.embedding->method},
             {"points", std::move(points)}}};
  }

  /// POST /api/labels with {"class_name": c, "clip_ids": [...]} or
  /// {"class_name": c, "polygon": [[x, y], ...], "only_unlabeled": bool}.
  ApiResponse post_labels(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("class_name") || !body["class_name"].is_string())
      return error_response(400, "validation", "body needs a string 'class_name'");
    const std::string class_name = body["class_name"].get<std::string>();
    const bool has_ids = body.contains("clip_ids");
    const bool has_polygon = body.contains("polygon");
    if (has_ids == has_polygon)
      return error_response(400, "validation", "give exactly one of 'clip_ids' or 'polygon'");

    return mutate([&](Session& s) {
      std::vector<ClipId> ids;
      std::optional<std::string> warning;
      if (has_polygon) {
        const LassoPolygon polygon = parse_polygon(body["polygon"]);
        const bool only_unlabeled = body.value("only_unlabeled", false);
        LassoSelection sel = s.lasso_select(polygon, only_unlabeled);
        ids = std::move(sel.clip_ids);
        warning = std::move(sel.warning);
      } else {
        if (!body["clip_ids"].is_array())
          throw ValidationError("'clip_ids' must be an array of strings");
        for (const auto& id : body["clip_ids"]) {
          if (!id.is_string()) throw ValidationError("'clip_ids' must be an array of strings");
          ids.push_back(ClipId::parse(id.get<std::string>()));
        }
      }
      s.assign_label(ids, class_name);
      nlohmann::json affected = nlohmann::json::array();
      for (const auto& id : ids) affected.push_back(id.str());
      nlohmann::json j{{"labeled", s.labeled_count()},
                       {"unlabeled", s.unlabeled_count()},
                       {"affected", std::move(affected)},
                       {"class_name", class_name},
                       {"color", s.color_of(class_name)}};
      if (warning) j["warning"] = *warning;
      return j;
    });
  }

  /// POST /api/round with optional {"manifest": path, "toa_seconds": s}.
  /// Schedules a refresh (when a manifest is given) plus re-embedding; the
  /// round advances when the job completes.
  ApiResponse post_round(const nlohmann::json& body) {
    std::optional<std::filesystem::path> manifest;
    std::optional<double> toa;
    if (!body.is_null()) {
      if (!body.is_object()) return error_response(400, "validation", "body must be an object");
      if (body.contains("manifest") && !body["manifest"].is_null()) {
        if (!body["manifest"].is_string())
          return error_response(400, "validation", "'manifest' must be a path string");
        manifest = body["manifest"].get<std::string>();
      }
      if (body.contains("toa_seconds") && !body["toa_seconds"].is_null()) {
        if (!body["toa_seconds"].is_number())
          return error_response(400, "validation", "'toa_seconds' must be a number");
        toa = body["toa_seconds"].get<double>();
        if (!(*toa >= 0.0)) return error_response(400, "validation", "'toa_seconds' must be >= 0");
      }
    }
    std::unique_lock lock(mutex_);
    if (job_running_locked())
      return {409, {{"error", "conflict"},
                    {"message", "a background job is already running"},
                    {"job_id", active_job_id_locked()}}};
    if (toa) {
      Session next = session_;
      next.record_toa(*toa);
      commit_locked(std::move(next));
    }
    if (session_.budget_exhausted())
      return {200, {{"status", "budget_exhausted"}, {"round", session_.round()}}};
    auto status = start_job_locked(manifest ? JobKind::refresh : JobKind::embed, manifest, true);
    return {202, to_json(status)};
  }

  /// Starts an embedding of the current dataset without advancing the round.
  ApiResponse post_embed() {
    std::unique_lock lock(mutex_);
    if (job_running_locked())
      return {409, {{"error", "conflict"},
                    {"message", "a background job is already running"},
                    {"job_id", active_job_id_locked()}}};
    return {202, to_json(start_job_locked(JobKind::embed, std::nullopt, false))};
  }

  /// GET /api/metrics
  ApiResponse get_metrics() const {
    std::shared_lock lock(mutex_);
    if (!session_.view())
      return error_response(409, "not_ready", "no embedding has been computed yet");
    try {
      return {200, to_json(session_.metrics(options_.kmeans_seed))};
    } catch (const Error& e) {
      return error_response(http_status(e.kind()), to_string(e.kind()), e.what());
    }
  }

  /// GET /api/export
  ApiResponse get_export() const {
    std::shared_lock lock(mutex_);
    ApiResponse r;
    r.raw = label_export_string(session_.export_segments());
    return r;
  }

  /// GET /api/jobs/{id}
  ApiResponse get_job(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) return error_response(404, "not_found", fmt::format("no job '{}'", id));
    return {200, to_json(it->second->snapshot())};
  }

  /// GET /thumbs/{clip_id}
  ApiResponse get_thumbnail(const std::string& clip_id) const {
    std::string path;
    {
      std::shared_lock lock(mutex_);
      ClipId id;
      try {
        id = ClipId::parse(clip_id);
      } catch (const Error& e) {
        return error_response(400, "validation", e.what());
      }
      const auto row = session_.dataset().find(id);
      if (!row || session_.dataset().clips[*row].thumbnail_ref.empty())
        return error_response(404, "not_found", fmt::format("no thumbnail for '{}'", clip_id));
      path = session_.dataset().clips[*row].thumbnail_ref;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) return error_response(404, "not_found", fmt::format("cannot read '{}'", path));
    ApiResponse r;
    r.raw.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    const auto ext = std::filesystem::path(path).extension().string();
    r.content_type = (ext == ".png") ? "image/png" : "image/jpeg";
    return r;
  }

  // --- helpers for embedding hosts and tests ---------------------------------

  /// Blocks until the given job leaves the queued/running states.
  JobStatus wait_for_job(const std::string& id) {
    std::shared_ptr<Job> job;
    {
      std::shared_lock lock(mutex_);
      const auto it = jobs_.find(id);
      if (it == jobs_.end()) throw NotFoundError(fmt::format("no job '{}'", id));
      job = it->second;
    }
    std::unique_lock lk(job->done_mutex);
    job->done_cv.wait(lk, [&] { return job->finished; });
    return job->snapshot();
  }

  /// Copy of the current session state.
  Session session_snapshot() const {
    std::shared_lock lock(mutex_);
    return session_;
  }

  std::string snapshot_hash() const {
    std::shared_lock lock(mutex_);
    return session_.snapshot_hash();
  }

  /// Registers all routes on an httplib server.
  void bind(httplib::Server& http) {
    auto send = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      if (!r.raw.empty() || r.content_type != "application/json")
        res.set_content(r.raw, r.content_type.c_str());
      else
        res.set_content(r.body.dump(), "application/json");
    };
    auto parse_body = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
      if (req.body.empty()) return nlohmann::json(nullptr);
      try {
        return nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        return std::nullopt;
      }
    };
    http.Get("/api/session", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, get_session());
    });
    http.Get("/api/embedding", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, get_embedding());
    });
    http.Post("/api/labels", [this, send, parse_body](const httplib::Request& req,
                                                      httplib::Response& res) {
      const auto body = parse_body(req);
      send(res, body ? post_labels(*body) : error_response(400, "validation", "body is not JSON"));
    });
    http.Post("/api/round", [this, send, parse_body](const httplib::Request& req,
                                                     httplib::Response& res) {
      const auto body = parse_body(req);
      send(res, body ? post_round(*body) : error_response(400, "validation", "body is not JSON"));
    });
    http.Post("/api/embed", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, post_embed());
    });
    http.Get("/api/metrics", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, get_metrics());
    });
    http.Get("/api/export", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, get_export());
    });
    http.Get(R"(/api/jobs/([^/]+))", [this, send](const httplib::Request& req,
                                                  httplib::Response& res) {
      send(res, get_job(req.matches[1]));
    });
    http.Get(R"(/thumbs/([^/]+))", [this, send](const httplib::Request& req,
                                                httplib::Response& res) {
      send(res, get_thumbnail(req.matches[1]));
    });
  }

 private:
  struct Job {
    std::string id;
    JobKind kind = JobKind::embed;
    std::atomic<JobState> state{JobState::queued};
    std::atomic<double> progress{0.0};
    mutable std::mutex message_mutex;
    std::string message;
    std::mutex done_mutex;
    std::condition_variable done_cv;
    bool finished = false;

    JobStatus snapshot() const {
      JobStatus s{id, kind, state.load(), progress.load(), {}};
      std::lock_guard lk(message_mutex);
      s.message = message;
      return s;
    }
    void finish(JobState final_state, std::string text) {
      {
        std::lock_guard lk(message_mutex);
        message = std::move(text);
      }
      state = final_state;
      {
        std::lock_guard lk(done_mutex);
        finished = true;
      }
      done_cv.notify_all();
    }
  };

  static LassoPolygon parse_polygon(const nlohmann::json& j) {
    if (!j.is_array()) throw ValidationError("'polygon' must be an array of [x, y] pairs");
    std::vector<Point2> vertices;
    for (const auto& v : j) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ValidationError("'polygon' must be an array of [x, y] pairs");
      vertices.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    return LassoPolygon(std::move(vertices));
  }

  /// Applies `fn` to a copy of the session and commits it only on success.
  template <typename Fn>
  ApiResponse mutate(Fn&& fn) {
    std::unique_lock lock(mutex_);
    Session next = session_;
    try {
      nlohmann::json body = fn(next);
      commit_locked(std::move(next));
      return {200, std::move(body)};
    } catch (const Error& e) {
      return error_response(http_status(e.kind()), to_string(e.kind()), e.what());
    }
  }

  void commit_locked(Session next) {
    session_ = std::move(next);
    if (options_.autosave_path) {
      try {
        session_.save(*options_.autosave_path);
      } catch (const Error&) {
        // The in-memory session stays authoritative; the next commit retries.
      }
    }
  }

  bool job_running_locked() const {
    if (active_job_.empty()) return false;
    const auto state = jobs_.at(active_job_)->state.load();
    return state == JobState::queued || state == JobState::running;
  }

  nlohmann::json active_job_id_locked() const {
    return job_running_locked() ? nlohmann::json(active_job_) : nlohmann::json(nullptr);
  }

  JobStatus start_job_locked(JobKind kind, std::optional<std::filesystem::path> manifest,
                             bool advance) {
    if (worker_.joinable()) worker_.join();  // previous job already finished
    auto job = std::make_shared<Job>();
    job->id = fmt::format("job-{}", ++job_counter_);
    job->kind = kind;
    jobs_[job->id] = job;
    active_job_ = job->id;
    std::shared_ptr<const Dataset> base = session_.dataset_ptr();
    TsneConfig config = session_.tsne_config();
    worker_ = std::jthread([this, job, base, config, manifest, advance](std::stop_token stop) {
      run_job(std::move(stop), job, base, config, manifest, advance);
    });
    return job->snapshot();
  }

  void run_job(std::stop_token stop, std::shared_ptr<Job> job,
               std::shared_ptr<const Dataset> base, TsneConfig config,
               std::optional<std::filesystem::path> manifest, bool advance) {
    job->state = JobState::running;
    try {
      std::shared_ptr<const Dataset> dataset = base;
      if (manifest) dataset = std::make_shared<const Dataset>(refresh_features(*base, *manifest));
      if (dataset->size() <= neighbor_count(config.perplexity))
        throw ParameterError(fmt::format("{} clips are too few for perplexity {}",
                                         dataset->size(), config.perplexity));
      Embedding embedding = run_tsne(dataset->features, config, stop, [&](int done, int total) {
        job->progress = static_cast<double>(done) / static_cast<double>(total);
      });
      {
        std::unique_lock lock(mutex_);
        Session next = session_;
        if (advance) next.advance_round_to(dataset, manifest);
        if (options_.embedding_path) {
          save_embedding(*options_.embedding_path, embedding);
          next.set_embedding_path(options_.embedding_path->string());
        }
        next.set_embedding(dataset, std::move(embedding));
        commit_locked(std::move(next));
      }
      job->progress = 1.0;
      job->finish(JobState::done, "ok");
    } catch (const std::exception& e) {
      job->finish(JobState::failed, e.what());
    }
  }

  mutable std::shared_mutex mutex_;
  Session session_;
  Options options_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::string active_job_;
  std::uint64_t job_counter_ = 0;
  std::jthread worker_;
};

}  // namespace clipmap

#endif  // CLIPMAP_SERVER_HPP
