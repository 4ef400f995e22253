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

// clipmap: command-line driver for the annotation pipeline.
//
//   synth          write a synthetic clustered dataset (+ session)
//   ingest         create a session from a feature manifest
//   embed          compute the 2D map (t-SNE or PCA)
//   metrics        print the quality report for the current map
//   emulate        homogeneity/completeness across perplexities
//   round          log annotation time and advance the round
//   export         write temporal label segments
//   import-labels  apply a label export to a session
//   serve          run the HTTP API
//
// Exit codes: 0 ok, 2 validation, 3 io, 4 numeric, 1 anything else.
// Failures also print {"error": kind, "message": text} on stderr.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include "CLI11.hpp"
#include "json.hpp"

#include "clipmap/ingest.hpp"
#include "clipmap/label_export.hpp"
#include "clipmap/metrics.hpp"
#include "clipmap/pca.hpp"
#include "clipmap/server.hpp"
#include "clipmap/session.hpp"
#include "clipmap/tsne.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace clipmap;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return 3;
    case ErrorKind::numeric: return 4;
    case ErrorKind::cancelled: return 4;
    default: return 2;
  }
}

int fail(std::string_view kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

/// Path stored in the session file: relative to the session's directory.
std::string relative_to(const fs::path& target, const fs::path& session_path) {
  const fs::path base = fs::absolute(session_path).parent_path();
  return fs::relative(fs::absolute(target), base).generic_string();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("short write to '{}'", path.string()));
}

struct TsneFlags {
  std::optional<double> perplexity, early_exaggeration, learning_rate, theta;
  std::optional<double> momentum_initial, momentum_final;
  std::optional<int> iterations, exaggeration_iters;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--perplexity", perplexity, "effective neighbor count (default 30)");
    app->add_option("--early-exaggeration,--exaggeration", early_exaggeration,
                    "affinity multiplier during the early phase (default 12)");
    app->add_option("--learning-rate,--lr", learning_rate, "step size (default 200)");
    app->add_option("--iterations,--iters", iterations,
                    "total iterations including the early phase (default 2500)");
    app->add_option("--theta", theta, "Barnes-Hut opening angle in [0, 1] (default 0.5)");
    app->add_option("--exaggeration-iters", exaggeration_iters,
                    "length of the early phase (default 250)");
    app->add_option("--momentum-initial", momentum_initial, "(default 0.5)");
    app->add_option("--momentum-final", momentum_final, "(default 0.8)");
    app->add_option("--seed", seed, "random seed (default 0)");
  }

  TsneConfig apply(TsneConfig c) const {
    if (perplexity) c.perplexity = *perplexity;
    if (early_exaggeration) c.early_exaggeration = *early_exaggeration;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (iterations) c.iterations = *iterations;
    if (theta) c.theta = *theta;
    if (exaggeration_iters) c.exaggeration_iters = *exaggeration_iters;
    if (momentum_initial) c.momentum_initial = *momentum_initial;
    if (momentum_final) c.momentum_final = *momentum_final;
    if (seed) c.seed = *seed;
    c.validate();
    return c;
  }
};

TsneProgress progress_printer(bool verbose) {
  if (!verbose) return {};
  return [](int done, int total) {
    if (done % 250 == 0 || done == total) std::cerr << fmt::format("iteration {}/{}\n", done, total);
  };
}

// --- commands -------------------------------------------------------------

struct SynthArgs {
  fs::path out_dir;
  std::size_t clusters = 10, per_cluster = 100, dim = 512, videos_per_cluster = 1;
  double separation = 10.0;
  std::uint64_t seed = 0;
  bool label = false;
};

// Cluster c fills videos_per_cluster videos; each video holds consecutive
// clips of one class. Centers are scaled one-hot vectors, so all pairs sit
// `separation` apart with unit noise per coordinate.
int cmd_synth(const SynthArgs& a) {
  if (a.clusters == 0 || a.per_cluster == 0 || a.dim < a.clusters)
    throw ParameterError("need clusters >= 1, per-cluster >= 1 and dim >= clusters");
  if (a.per_cluster % a.videos_per_cluster != 0)
    throw ParameterError("per-cluster must be a multiple of videos-per-cluster");
  Rng rng(a.seed);
  const std::size_t n = a.clusters * a.per_cluster;
  const std::size_t clips_per_video = a.per_cluster / a.videos_per_cluster;
  const double scale = a.separation / std::sqrt(2.0);
  Dataset ds;
  ds.features = Matrix(n, a.dim);
  std::vector<std::string> truth;
  for (std::size_t c = 0; c < a.clusters; ++c) {
    for (std::size_t v = 0; v < a.videos_per_cluster; ++v) {
      VideoMeta meta;
      meta.video_id = fmt::format("c{:02d}v{:03d}", c, v);
      meta.frame_count = static_cast<std::int64_t>(clips_per_video) * 32;
      for (auto& clip : make_clips(meta, 32)) {
        const std::size_t row = ds.clips.size();
        for (std::size_t d = 0; d < a.dim; ++d)
          ds.features(row, d) = (d == c ? scale : 0.0) + rng.normal();
        ds.clips.push_back(std::move(clip));
        truth.push_back(fmt::format("class{:02d}", c));
      }
      ds.videos.emplace(meta.video_id, meta);
    }
  }
  ds.reindex();
  fs::create_directories(a.out_dir);
  const fs::path manifest = write_dataset(ds, a.out_dir, "features");
  const fs::path session_path = a.out_dir / "session.json";
  Session s(std::move(ds), relative_to(manifest, session_path));
  if (a.label) {
    std::map<std::string, std::vector<ClipId>> by_class;
    for (std::size_t i = 0; i < truth.size(); ++i) by_class[truth[i]].push_back(s.dataset().clips[i].id);
    for (const auto& [name, ids] : by_class) s.assign_label(ids, name, 0);
  }
  s.save(session_path);
  std::cout << json{{"session", session_path.string()},
                    {"manifest", manifest.string()},
                    {"clips", n},
                    {"labeled", s.labeled_count()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_ingest(const fs::path& manifest, const fs::path& out, const std::string& extractor,
               std::optional<double> budget) {
  if (!extractor.empty()) {
    // The extractor writes the manifest (and blob) given as its last argument.
    const std::string command = fmt::format("{} '{}'", extractor, manifest.string());
    const int rc = std::system(command.c_str());
    if (rc != 0) throw IoError(fmt::format("extractor command failed with status {}", rc));
  }
  Session s(load_dataset(manifest), relative_to(manifest, out));
  s.set_budget_seconds(budget);
  s.save(out);
  std::cout << json{{"session", out.string()},
                    {"clips", s.dataset().size()},
                    {"videos", s.dataset().videos.size()},
                    {"dim", s.dataset().dim()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_embed(const fs::path& session_path, const TsneFlags& flags, const std::string& method,
              std::optional<fs::path> out, bool verbose) {
  Session s = Session::load(session_path);
  const fs::path target = out ? *out : fs::absolute(session_path).parent_path() / "embedding.json";
  Embedding e;
  if (method == "pca") {
    e = pca2(s.dataset().features);
  } else {
    const TsneConfig config = flags.apply(s.tsne_config());
    s.set_tsne_config(config);
    e = run_tsne(s.dataset().features, config, {}, progress_printer(verbose));
  }
  save_embedding(target, e);
  s.set_embedding_path(relative_to(target, session_path));
  s.save(session_path);
  json summary{{"embedding", target.string()}, {"method", e.method}, {"points", e.points.size()}};
  if (!e.kl_trace.empty()) summary["kl_divergence"] = e.kl_trace.back().second;
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_metrics(const fs::path& session_path, std::uint64_t kmeans_seed) {
  const Session s = Session::load(session_path);
  if (!s.view()) throw ConflictError("session has no embedding; run 'clipmap embed' first");
  std::cout << to_json(s.metrics(kmeans_seed)).dump(2) << "\n";
  return 0;
}

int cmd_emulate(const fs::path& session_path, std::vector<double> perplexities,
                const TsneFlags& flags, std::uint64_t kmeans_seed, bool as_json, bool verbose) {
  const Session s = Session::load(session_path);
  const auto names = s.labels_for(s.dataset());
  std::vector<std::string> classes;
  const std::vector<int> ids = encode_labels(names, &classes);
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != kNoLabel) labeled.push_back(i);
  if (labeled.size() < 2 || classes.empty())
    throw ValidationError("emulation needs at least two labeled clips");

  json rows = json::array();
  for (double px : perplexities) {
    json row{{"perplexity", px}};
    if (s.dataset().size() <= neighbor_count(px)) {
      row["homogeneity"] = nullptr;
      row["completeness"] = nullptr;
      row["knn_accuracy"] = nullptr;
      row["note"] = fmt::format("{} clips are too few for perplexity {}", s.dataset().size(), px);
      rows.push_back(row);
      continue;
    }
    TsneConfig config = flags.apply(s.tsne_config());
    config.perplexity = px;
    if (verbose) std::cerr << fmt::format("perplexity {}\n", px);
    const Embedding e = run_tsne(s.dataset().features, config, {}, progress_printer(verbose));
    std::vector<Point2> pts;
    std::vector<int> lab;
    for (std::size_t i : labeled) {
      pts.push_back(e.points[i]);
      lab.push_back(ids[i]);
    }
    const auto km = kmeans(pts, classes.size(), kmeans_seed);
    const auto hc = homogeneity_completeness(km.assignment, lab);
    row["homogeneity"] = hc.homogeneity;
    row["completeness"] = hc.completeness;
    row["knn_accuracy"] = knn_accuracy(pts, lab, 4);
    rows.push_back(row);
  }
  if (as_json) {
    std::cout << rows.dump(2) << "\n";
    return 0;
  }
  auto cell = [](const json& v) {
    return v.is_null() ? std::string("n/a") : fmt::format("{:.1f}%", 100.0 * v.get<double>());
  };
  std::string header = fmt::format("{:<14}", "");
  std::string h = fmt::format("{:<14}", "Homogeneity");
  std::string c = fmt::format("{:<14}", "Completeness");
  for (const auto& r : rows) {
    header += fmt::format("{:>10}", fmt::format("px-{:g}", r["perplexity"].get<double>()));
    h += fmt::format("{:>10}", cell(r["homogeneity"]));
    c += fmt::format("{:>10}", cell(r["completeness"]));
  }
  std::cout << header << "\n" << h << "\n" << c << "\n";
  return 0;
}

int cmd_round(const fs::path& session_path, std::optional<fs::path> manifest,
              std::optional<double> toa) {
  Session s = Session::load(session_path);
  if (toa) s.record_toa(*toa);
  const AdvanceStatus status = s.advance_round(manifest);
  s.save(session_path);
  std::cout << json{{"status", status == AdvanceStatus::advanced ? "advanced" : "budget_exhausted"},
                    {"round", s.round()},
                    {"cumulative_toa_seconds", s.cumulative_toa()},
                    {"clips", s.dataset().size()}}
                   .dump()
            << "\n";
  return status == AdvanceStatus::advanced ? 0 : 2;
}

int cmd_export(const fs::path& session_path, const fs::path& out) {
  const Session s = Session::load(session_path);
  write_text(out, label_export_string(s.export_segments()));
  std::size_t segments = 0;
  for (const auto& [video, segs] : s.export_segments()) segments += segs.size();
  std::cout << json{{"export", out.string()}, {"segments", segments}}.dump() << "\n";
  return 0;
}

int cmd_import(const fs::path& session_path, const fs::path& labels_path) {
  Session s = Session::load(session_path);
  std::ifstream in(labels_path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", labels_path.string()));
  const SegmentMap segments = read_label_export(in);
  for (const auto& [video, segs] : segments)
    if (!s.dataset().videos.contains(video))
      throw NotFoundError(fmt::format("label file names unknown video '{}'", video));
  std::map<std::string, std::vector<ClipId>> by_class;
  for (const auto& [clip, name] : labels_from_segments(s.dataset(), segments))
    by_class[name].push_back(clip);
  std::size_t assigned = 0;
  for (const auto& [name, ids] : by_class) {
    s.assign_label(ids, name);
    assigned += ids.size();
  }
  s.save(session_path);
  std::cout << json{{"assigned", assigned}, {"labeled", s.labeled_count()}}.dump() << "\n";
  return 0;
}

httplib::Server* g_http = nullptr;

int cmd_serve(const fs::path& session_path, const std::string& host, int port,
              std::optional<fs::path> ui_dir) {
  Session s = Session::load(session_path);
  AnnotationServer::Options opt;
  opt.autosave_path = fs::absolute(session_path);
  opt.embedding_path = fs::absolute(session_path).parent_path() / "embedding.json";
  AnnotationServer api(std::move(s), opt);
  httplib::Server http;
  api.bind(http);
  if (ui_dir && !http.set_mount_point("/", ui_dir->string()))
    throw IoError(fmt::format("cannot serve UI directory '{}'", ui_dir->string()));
  const int bound = port == 0 ? http.bind_to_any_port(host) : (http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError(fmt::format("cannot listen on {}:{}", host, port));
  std::cout << json{{"listening", fmt::format("http://{}:{}", host, bound)}}.dump() << std::endl;
  g_http = &http;
  std::signal(SIGINT, [](int) { if (g_http) g_http->stop(); });
  std::signal(SIGTERM, [](int) { if (g_http) g_http->stop(); });
  http.listen_after_bind();
  g_http = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clipmap: embed video clips in 2D and group-label them"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic clustered dataset and session");
  c_synth->add_option("--out", synth.out_dir, "output directory")->required();
  c_synth->add_option("--clusters", synth.clusters);
  c_synth->add_option("--per-cluster", synth.per_cluster);
  c_synth->add_option("--dim", synth.dim);
  c_synth->add_option("--videos-per-cluster", synth.videos_per_cluster);
  c_synth->add_option("--separation", synth.separation,
                      "distance between cluster centers, in units of the noise std");
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_flag("--label", synth.label, "assign the ground-truth classes in the session");

  fs::path manifest, out, session, labels_file;
  std::string extractor;
  std::optional<double> budget;
  auto* c_ingest = app.add_subcommand("ingest", "create a session from a feature manifest");
  c_ingest->add_option("manifest", manifest)->required();
  c_ingest->add_option("--out", out, "session file")->required();
  c_ingest->add_option("--extractor-cmd", extractor,
                       "program run first to write the manifest (path appended)");
  c_ingest->add_option("--budget", budget, "annotation budget in seconds");

  TsneFlags tsne_flags;
  std::string method = "tsne";
  std::optional<fs::path> embed_out;
  bool verbose = false;
  auto* c_embed = app.add_subcommand("embed", "compute the 2D map");
  c_embed->add_option("session", session)->required();
  tsne_flags.add(c_embed);
  c_embed->add_option("--method", method)->check(CLI::IsMember({"tsne", "pca"}));
  c_embed->add_option("--out", embed_out, "embedding file (default: next to the session)");
  c_embed->add_flag("--verbose,-v", verbose);

  std::uint64_t kmeans_seed = 0;
  auto* c_metrics = app.add_subcommand("metrics", "print the quality report");
  c_metrics->add_option("session", session)->required();
  c_metrics->add_option("--kmeans-seed", kmeans_seed);

  std::vector<double> perplexities{5, 15, 30, 50, 100, 120};
  bool as_json = false;
  TsneFlags emulate_flags;
  auto* c_emulate = app.add_subcommand("emulate", "homogeneity/completeness per perplexity");
  c_emulate->add_option("session", session)->required();
  c_emulate->add_option("--perplexities", perplexities)->delimiter(',');
  emulate_flags.add(c_emulate);
  c_emulate->add_option("--kmeans-seed", kmeans_seed);
  c_emulate->add_flag("--json", as_json);
  c_emulate->add_flag("--verbose,-v", verbose);

  std::optional<fs::path> round_manifest;
  std::optional<double> toa;
  auto* c_round = app.add_subcommand("round", "log annotation time and advance the round");
  c_round->add_option("session", session)->required();
  c_round->add_option("--manifest", round_manifest, "refreshed feature manifest");
  c_round->add_option("--toa", toa, "seconds spent annotating this round");

  auto* c_export = app.add_subcommand("export", "write temporal label segments");
  c_export->add_option("session", session)->required();
  c_export->add_option("--out", out)->required();

  auto* c_import = app.add_subcommand("import-labels", "apply a label export to a session");
  c_import->add_option("session", session)->required();
  c_import->add_option("labels", labels_file)->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<fs::path> ui_dir;
  auto* c_serve = app.add_subcommand("serve", "run the HTTP API");
  c_serve->add_option("session", session)->required();
  c_serve->add_option("--host", host);
  c_serve->add_option("--port", port, "0 picks a free port");
  c_serve->add_option("--ui-dir", ui_dir, "static files served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_ingest) return cmd_ingest(manifest, out, extractor, budget);
    if (*c_embed) return cmd_embed(session, tsne_flags, method, embed_out, verbose);
    if (*c_metrics) return cmd_metrics(session, kmeans_seed);
    if (*c_emulate)
      return cmd_emulate(session, perplexities, emulate_flags, kmeans_seed, as_json, verbose);
    if (*c_round) return cmd_round(session, round_manifest, toa);
    if (*c_export) return cmd_export(session, out);
    if (*c_import) return cmd_import(session, labels_file);
    if (*c_serve) return cmd_serve(session, host, port, ui_dir);
  } catch (const Error& e) {
    return fail(to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 1;
}
