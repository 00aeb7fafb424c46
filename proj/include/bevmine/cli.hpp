#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "bevmine/errors.hpp"
#include "bevmine/eval.hpp"
#include "bevmine/io.hpp"
#include "bevmine/mining.hpp"
#include "bevmine/synth.hpp"
#include "bevmine/toy.hpp"

namespace bevmine::cli {

/// Worker cap: BEVMINE_THREADS when set (must be a positive integer),
/// otherwise the available hardware parallelism.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("BEVMINE_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0' || v == 0 || v > 4096) {
      throw InvalidConfig("BEVMINE_THREADS must be a positive integer");
    }
    return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(0..n-1) across up to thread_budget() workers. fn must handle
/// expected per-item failures itself (results stay index-addressed, so
/// output order never depends on scheduling); unexpected exceptions are
/// rethrown after all workers finish.
template <typename F>
inline void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(thread_budget(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next.fetch_add(1); i < n;
             i = next.fetch_add(1)) {
          fn(i);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Builds a scene plus its detections. The detection noise stream is a
/// fixed function of the scene seed (distinct from the placement stream),
/// so a scene file is reproducible from its header alone.
inline synth::SceneSample generate_with_detections(
    const synth::SceneSpec& spec, const synth::NoiseModel& noise) {
  const synth::SceneSample bare = synth::generate_scene(spec);
  const std::uint64_t det_seed =
      spec.seed * 0x9e3779b97f4a7c15ULL + 0x64e7ec71ULL;
  return synth::corrupt(bare, noise, det_seed);
}

inline void cmd_generate(const io::RunConfig& config,
                         const std::string& out_path) {
  const synth::SceneSample sample =
      generate_with_detections(config.scene, config.noise);
  io::write_scene_file(out_path, config.scene, sample);
}

/// Mines every scene file (concurrently, capped by thread_budget) and
/// writes one report entry per scene in input order. A scene that fails to
/// read or mine is recorded in its entry instead of aborting the batch.
inline void cmd_mine(const std::vector<std::string>& scene_paths,
                     const io::RunConfig& config,
                     const std::string& report_path) {
  mining::validate(config.mining);
  std::vector<io::SceneReport> reports(scene_paths.size());
  parallel_for(scene_paths.size(), [&](std::size_t i) {
    io::SceneReport& r = reports[i];
    r.scene = scene_paths[i];
    try {
      const io::SceneFile f = io::read_scene_file(scene_paths[i]);
      r.result = mining::decoupled_generate(f.sample.detections, f.sample.rig,
                                            config.mining);
    } catch (const Error& e) {
      r.failed = true;
      r.error_code = e.code();
      r.error_message = e.what();
    }
  });
  io::write_mining_report(report_path, reports);
}

inline void cmd_eval(const std::string& scene_path,
                     const std::string& report_path,
                     const std::string& out_csv, std::size_t scene_index = 0,
                     double good_threshold = 1.0) {
  const io::SceneFile f = io::read_scene_file(scene_path);
  const auto reports = io::read_mining_report(report_path);
  if (scene_index >= reports.size()) {
    throw MismatchedInputs("report has no entry for the requested scene");
  }
  const io::SceneReport& entry = reports[scene_index];
  if (entry.failed) {
    throw MismatchedInputs("report entry records a mining error (" +
                           entry.error_code + "), nothing to evaluate");
  }
  const std::size_t n_det = f.sample.detections.size();
  const auto check = [n_det](std::size_t idx) {
    if (idx >= n_det) {
      throw MismatchedInputs("report index " + std::to_string(idx) +
                             " exceeds scene detection count " +
                             std::to_string(n_det));
    }
  };
  for (std::size_t i : entry.result.labels_2d) check(i);
  for (std::size_t i : entry.result.labels_3d) check(i);
  for (std::size_t i : entry.result.seed_indices) check(i);
  for (const auto& [i, eps] : entry.result.per_candidate_error) check(i);

  const eval::SelectionMetrics sel =
      eval::selection_metrics(f.sample, entry.result, good_threshold);

  eval::ErrorStats gt_stats, det_stats;
  if (f.sample.boxes.size() >= 2) {
    try {
      const auto m = eval::gt_fit_homography(f.sample);
      gt_stats = eval::loc_error_stats(f.sample, m, eval::ErrorSource::gt);
      det_stats =
          eval::loc_error_stats(f.sample, m, eval::ErrorSource::detections);
    } catch (const DegenerateConfiguration&) {
      // Scene too degenerate for a reference plane fit; emit n = 0 rows.
    }
  }

  std::vector<io::MetricRow> rows{
      {"selection_precision", sel.precision, sel.n_selected},
      {"selection_recall", sel.recall, sel.n_good},
      {"n_selected", static_cast<double>(sel.n_selected), sel.n_selected},
      {"n_good", static_cast<double>(sel.n_good), sel.n_good},
      {"n_candidates", static_cast<double>(sel.n_candidates),
       sel.n_candidates},
      {"loc_err_gt_mean", gt_stats.mean, gt_stats.n},
      {"loc_err_gt_median", gt_stats.median, gt_stats.n},
      {"loc_err_gt_p90", gt_stats.p90, gt_stats.n},
      {"loc_err_det_mean", det_stats.mean, det_stats.n},
      {"loc_err_det_median", det_stats.median, det_stats.n},
      {"loc_err_det_p90", det_stats.p90, det_stats.n},
  };
  io::write_metrics_csv(out_csv, rows);
}

/// Runs the toy experiment for every configured seed (and both projection
/// settings when requested), writing the per-step trace CSV to out_csv and
/// per-run summaries (final losses plus conflict proportions) next to it
/// as <out>.summary.csv.
inline void cmd_dgp(const io::RunConfig& config, const std::string& out_csv) {
  const io::HarnessRun& run = config.harness;
  if (run.seeds.empty()) {
    throw InvalidConfig("dgp needs at least one seed in harness.seeds");
  }
  toy::validate(run.base);

  std::vector<bool> modes;
  if (run.mode == io::ProjectionMode::with_projection) {
    modes = {true};
  } else if (run.mode == io::ProjectionMode::without_projection) {
    modes = {false};
  } else {
    modes = {true, false};
  }

  struct Job {
    std::uint64_t seed;
    bool projection;
  };
  std::vector<Job> jobs;
  for (std::uint64_t seed : run.seeds) {
    for (bool p : modes) jobs.push_back({seed, p});
  }
  std::vector<gradproj::ConflictReport> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    toy::HarnessConfig c = run.base;
    c.projection = jobs[i].projection;
    results[i] = toy::run_toy_experiment(c, jobs[i].seed);
  });

  std::ofstream os(out_csv, std::ios::binary);
  if (!os) throw IoError("cannot open CSV for writing: " + out_csv);
  os << "seed,projection,step,cos_ud_p,cos_ud_sd,cos_ud_o,cos_sd_o,"
        "loss_sd,loss_ud,loss_o\n";
  for (const auto& r : results) {
    for (std::size_t s = 0; s < r.steps(); ++s) {
      os << r.seed << "," << (r.projection ? 1 : 0) << "," << s << ","
         << io::fmt_real(r.cos_ud_p[s]) << "," << io::fmt_real(r.cos_ud_sd[s])
         << "," << io::fmt_real(r.cos_ud_o[s]) << ","
         << io::fmt_real(r.cos_sd_o[s]) << "," << io::fmt_real(r.loss_sd[s])
         << "," << io::fmt_real(r.loss_ud[s]) << ","
         << io::fmt_real(r.loss_o[s]) << "\n";
    }
  }
  os.flush();
  if (!os) throw IoError("failed writing CSV: " + out_csv);

  std::filesystem::path summary_path(out_csv);
  summary_path.replace_extension();
  summary_path += ".summary.csv";
  std::ofstream ss(summary_path, std::ios::binary);
  if (!ss) {
    throw IoError("cannot open CSV for writing: " + summary_path.string());
  }
  ss << "seed,projection,final_loss_sd,final_loss_ud,final_loss_o,"
        "final_reliable_loss,conflict_ud_p,conflict_ud_sd,conflict_ud_o,"
        "conflict_sd_o\n";
  for (const auto& r : results) {
    const eval::ConflictProportions cp = eval::conflict_proportions(r);
    ss << r.seed << "," << (r.projection ? 1 : 0) << ","
       << io::fmt_real(r.final_loss_sd) << "," << io::fmt_real(r.final_loss_ud)
       << "," << io::fmt_real(r.final_loss_o) << ","
       << io::fmt_real(r.final_reliable_loss()) << ","
       << io::fmt_real(cp.ud_p) << "," << io::fmt_real(cp.ud_sd) << ","
       << io::fmt_real(cp.ud_o) << "," << io::fmt_real(cp.sd_o) << "\n";
  }
  ss.flush();
  if (!ss) throw IoError("failed writing CSV: " + summary_path.string());
}

/// generate -> mine -> eval (-> dgp when harness seeds are configured),
/// everything under config.output_dir with fixed file names. Scene i uses
/// seed + i.
inline void cmd_pipeline(const io::RunConfig& config) {
  namespace fs = std::filesystem;
  const fs::path root(config.output_dir);
  std::error_code ec;
  fs::create_directories(root / "scenes", ec);
  fs::create_directories(root / "reports", ec);
  if (ec) throw IoError("cannot create output directory: " + ec.message());

  std::vector<std::string> scene_paths;
  for (int i = 0; i < config.n_scenes; ++i) {
    synth::SceneSpec spec = config.scene;
    spec.seed = config.scene.seed + static_cast<std::uint64_t>(i);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d.jsonl", i);
    const std::string path = (root / "scenes" / name).string();
    io::write_scene_file(path, spec,
                         generate_with_detections(spec, config.noise));
    scene_paths.push_back(path);
  }

  const std::string report_path = (root / "reports" / "mining.json").string();
  cmd_mine(scene_paths, config, report_path);

  for (int i = 0; i < config.n_scenes; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "eval_%04d.csv", i);
    cmd_eval(scene_paths[static_cast<std::size_t>(i)], report_path,
             (root / "reports" / name).string(),
             static_cast<std::size_t>(i));
  }

  if (!config.harness.seeds.empty()) {
    cmd_dgp(config, (root / "reports" / "dgp_trace.csv").string());
  }
}

}  // namespace bevmine::cli
