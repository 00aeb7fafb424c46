#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bevmine/errors.hpp"
#include "bevmine/geom.hpp"
#include "bevmine/mining.hpp"
#include "bevmine/synth.hpp"
#include "bevmine/toy.hpp"

namespace bevmine::io {

using ojson = nlohmann::ordered_json;

/// 17 significant decimal digits: enough to reproduce any double
/// bit-exactly on parse, so files round-trip without drift.
inline std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline void check_keys(const ojson& j,
                       std::initializer_list<const char*> allowed,
                       const char* context) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (item.key() == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw InvalidConfig(std::string("unknown key '") + item.key() + "' in " +
                          context);
    }
  }
}

inline double get_real(const ojson& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) {
    throw InvalidConfig(std::string("'") + key + "' must be a number");
  }
  return j.at(key).get<double>();
}

inline synth::Interval get_interval(const ojson& j, const char* key,
                                    synth::Interval fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2 || !a[0].is_number() ||
      !a[1].is_number()) {
    throw InvalidConfig(std::string("'") + key +
                        "' must be a [lo, hi] number pair");
  }
  return {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scene JSONL
// ---------------------------------------------------------------------------

struct SceneFile {
  synth::SceneSpec spec;
  synth::SceneSample sample;
};

/// Writes the scene file: one header line (format version, rig, seed,
/// generation spec), then per box a {"box": ...} line followed by the
/// {"det": ...} lines matched to it. All reals carry 17 significant
/// digits.
inline void write_scene(std::ostream& os, const synth::SceneSpec& spec,
                        const synth::SceneSample& sample) {
  const auto real = fmt_real;
  const auto reals = [](std::initializer_list<double> vs) {
    std::string s = "[";
    bool first = true;
    for (double v : vs) {
      if (!first) s += ",";
      s += fmt_real(v);
      first = false;
    }
    return s + "]";
  };

  os << "{\"format_version\":1,\"rig\":{\"fx\":" << real(spec.rig.fx)
     << ",\"fy\":" << real(spec.rig.fy) << ",\"cx\":" << real(spec.rig.cx)
     << ",\"cy\":" << real(spec.rig.cy) << ",\"R\":"
     << reals({spec.rig.R(0, 0), spec.rig.R(0, 1), spec.rig.R(0, 2),
               spec.rig.R(1, 0), spec.rig.R(1, 1), spec.rig.R(1, 2),
               spec.rig.R(2, 0), spec.rig.R(2, 1), spec.rig.R(2, 2)})
     << ",\"T\":" << reals({spec.rig.T(0), spec.rig.T(1), spec.rig.T(2)})
     << "},\"seed\":" << spec.seed << ",\"spec\":{\"n_objects\":"
     << spec.n_objects << ",\"x_range\":"
     << reals({spec.x_range.lo, spec.x_range.hi}) << ",\"y_range\":"
     << reals({spec.y_range.lo, spec.y_range.hi})
     << ",\"size_ranges\":{\"length\":"
     << reals({spec.size_ranges.length.lo, spec.size_ranges.length.hi})
     << ",\"width\":"
     << reals({spec.size_ranges.width.lo, spec.size_ranges.width.hi})
     << ",\"height\":"
     << reals({spec.size_ranges.height.lo, spec.size_ranges.height.hi})
     << "},\"ground_bump_amplitude\":" << real(spec.ground_bump_amplitude)
     << "}}\n";

  for (std::size_t b = 0; b < sample.boxes.size(); ++b) {
    const geom::Box3D& box = sample.boxes[b];
    os << "{\"box\":{\"center\":"
       << reals({box.center.x(), box.center.y(), box.center.z()})
       << ",\"lwh\":" << reals({box.length, box.width, box.height})
       << ",\"yaw\":" << real(box.yaw) << "}}\n";
    for (std::size_t d = 0; d < sample.detections.size(); ++d) {
      if (sample.gt_match[d] != b) continue;
      const geom::Detection& det = sample.detections[d];
      os << "{\"det\":{\"class_id\":" << det.class_id
         << ",\"score\":" << real(det.score) << ",\"bbox\":"
         << reals({det.bbox2d[0], det.bbox2d[1], det.bbox2d[2], det.bbox2d[3]})
         << ",\"kp\":[";
      for (int k = 0; k < 5; ++k) {
        if (k) os << ",";
        os << reals({det.keypoints_bottom[k].u, det.keypoints_bottom[k].v});
      }
      os << "],\"depth\":" << real(det.depth) << ",\"lwh\":"
         << reals({det.length, det.width, det.height})
         << ",\"yaw\":" << real(det.yaw) << ",\"sigma\":" << real(det.sigma)
         << ",\"gt_index\":" << b << "}}\n";
    }
  }
  if (!os) throw IoError("failed while writing scene stream");
}

inline void write_scene_file(const std::string& path,
                             const synth::SceneSpec& spec,
                             const synth::SceneSample& sample) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open scene file for writing: " + path);
  write_scene(os, spec, sample);
  os.flush();
  if (!os) throw IoError("failed writing scene file: " + path);
}

inline SceneFile read_scene(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) {
    throw IoError("scene stream is empty (missing header line)");
  }
  ojson header;
  try {
    header = ojson::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad scene header: ") + e.what());
  }
  if (!header.contains("format_version") ||
      !header["format_version"].is_number_integer()) {
    throw IoError("scene header lacks format_version");
  }
  if (header["format_version"].get<int>() != 1) {
    throw UnsupportedVersion("unsupported scene format_version " +
                             header["format_version"].dump());
  }

  SceneFile out;
  try {
    const auto& rig = header.at("rig");
    out.spec.rig.fx = rig.at("fx").get<double>();
    out.spec.rig.fy = rig.at("fy").get<double>();
    out.spec.rig.cx = rig.at("cx").get<double>();
    out.spec.rig.cy = rig.at("cy").get<double>();
    const auto& r = rig.at("R");
    const auto& t = rig.at("T");
    if (r.size() != 9 || t.size() != 3) {
      throw IoError("rig R/T must have 9/3 entries");
    }
    for (int i = 0; i < 9; ++i) {
      out.spec.rig.R(i / 3, i % 3) = r[i].get<double>();
    }
    for (int i = 0; i < 3; ++i) out.spec.rig.T(i) = t[i].get<double>();

    out.spec.seed = header.at("seed").get<std::uint64_t>();
    const auto& sp = header.at("spec");
    out.spec.n_objects = sp.at("n_objects").get<int>();
    out.spec.x_range = {sp.at("x_range")[0].get<double>(),
                        sp.at("x_range")[1].get<double>()};
    out.spec.y_range = {sp.at("y_range")[0].get<double>(),
                        sp.at("y_range")[1].get<double>()};
    const auto& sr = sp.at("size_ranges");
    out.spec.size_ranges.length = {sr.at("length")[0].get<double>(),
                                   sr.at("length")[1].get<double>()};
    out.spec.size_ranges.width = {sr.at("width")[0].get<double>(),
                                  sr.at("width")[1].get<double>()};
    out.spec.size_ranges.height = {sr.at("height")[0].get<double>(),
                                   sr.at("height")[1].get<double>()};
    out.spec.ground_bump_amplitude =
        sp.at("ground_bump_amplitude").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad scene header: ") + e.what());
  }

  out.sample.rig = out.spec.rig;
  out.sample.provenance = {out.spec.seed, synth::detail::spec_hash(out.spec)};

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ojson rec;
    try {
      rec = ojson::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("bad scene record: ") + e.what());
    }
    try {
      if (rec.contains("box")) {
        const auto& b = rec["box"];
        geom::Box3D box;
        box.center = {b.at("center")[0].get<double>(),
                      b.at("center")[1].get<double>(),
                      b.at("center")[2].get<double>()};
        box.length = b.at("lwh")[0].get<double>();
        box.width = b.at("lwh")[1].get<double>();
        box.height = b.at("lwh")[2].get<double>();
        box.yaw = b.at("yaw").get<double>();
        geom::validate(box);
        out.sample.boxes.push_back(box);
      } else if (rec.contains("det")) {
        const auto& d = rec["det"];
        geom::Detection det;
        det.class_id = d.at("class_id").get<int>();
        det.score = d.at("score").get<double>();
        for (int i = 0; i < 4; ++i) {
          det.bbox2d[i] = d.at("bbox")[i].get<double>();
        }
        const auto& kp = d.at("kp");
        if (kp.size() != 5) throw IoError("det kp must have 5 points");
        for (int k = 0; k < 5; ++k) {
          det.keypoints_bottom[k] = {kp[k][0].get<double>(),
                                     kp[k][1].get<double>()};
        }
        det.depth = d.at("depth").get<double>();
        det.length = d.at("lwh")[0].get<double>();
        det.width = d.at("lwh")[1].get<double>();
        det.height = d.at("lwh")[2].get<double>();
        det.yaw = d.at("yaw").get<double>();
        det.sigma = d.at("sigma").get<double>();
        geom::validate(det);
        const auto gt = d.at("gt_index").get<std::size_t>();
        if (gt >= out.sample.boxes.size()) {
          throw IoError("det gt_index refers to a box not yet declared");
        }
        out.sample.detections.push_back(det);
        out.sample.gt_match.push_back(gt);
      } else {
        throw IoError("scene record is neither a box nor a det");
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("bad scene record: ") + e.what());
    }
  }
  return out;
}

inline SceneFile read_scene_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open scene file: " + path);
  return read_scene(is);
}

// ---------------------------------------------------------------------------
// Mining report JSON
// ---------------------------------------------------------------------------

/// One scene's entry in a mining report: either a result or a recorded
/// error (batch runs keep going past bad scenes).
struct SceneReport {
  std::string scene;
  mining::PseudoLabelSet result;
  bool failed = false;
  std::string error_code;
  std::string error_message;
};

inline ojson mining_report_json(const std::vector<SceneReport>& reports) {
  ojson arr = ojson::array();
  for (const auto& r : reports) {
    ojson e;
    e["scene"] = r.scene;
    if (r.failed) {
      e["error"] = {{"code", r.error_code}, {"message", r.error_message}};
      arr.push_back(e);
      continue;
    }
    const auto& p = r.result;
    e["labels_2d"] = p.labels_2d;
    e["labels_3d"] = p.labels_3d;
    e["iterations_used"] = p.iterations_used;
    e["fallback"] = p.fallback;
    e["fallback_reason"] = p.fallback_reason;
    e["seed_indices"] = p.seed_indices;
    ojson err = ojson::object();
    for (const auto& [idx, eps] : p.per_candidate_error) {
      err[std::to_string(idx)] = eps;
    }
    e["per_candidate_error"] = err;
    ojson iters = ojson::array();
    for (const auto& it : p.iterations) {
      ojson o;
      std::vector<double> h(9);
      for (int i = 0; i < 9; ++i) h[i] = it.homography.M(i / 3, i % 3);
      o["homography"] = h;
      o["selected_after"] = it.selected_after;
      iters.push_back(o);
    }
    e["iterations"] = iters;
    arr.push_back(e);
  }
  return arr;
}

inline void write_mining_report(const std::string& path,
                                const std::vector<SceneReport>& reports) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open report for writing: " + path);
  os << mining_report_json(reports).dump(2) << "\n";
  os.flush();
  if (!os) throw IoError("failed writing report: " + path);
}

inline std::vector<SceneReport> read_mining_report(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open report: " + path);
  ojson arr;
  try {
    is >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad mining report: ") + e.what());
  }
  if (!arr.is_array()) throw IoError("mining report must be a JSON array");
  std::vector<SceneReport> out;
  try {
    for (const auto& e : arr) {
      SceneReport r;
      r.scene = e.value("scene", std::string());
      if (e.contains("error")) {
        r.failed = true;
        r.error_code = e["error"].value("code", std::string());
        r.error_message = e["error"].value("message", std::string());
        out.push_back(r);
        continue;
      }
      r.result.labels_2d = e.at("labels_2d").get<std::vector<std::size_t>>();
      r.result.labels_3d = e.at("labels_3d").get<std::vector<std::size_t>>();
      r.result.iterations_used = e.at("iterations_used").get<int>();
      r.result.fallback = e.at("fallback").get<bool>();
      r.result.fallback_reason = e.at("fallback_reason").get<std::string>();
      r.result.seed_indices =
          e.at("seed_indices").get<std::vector<std::size_t>>();
      for (const auto& item : e.at("per_candidate_error").items()) {
        r.result.per_candidate_error[std::stoull(item.key())] =
            item.value().get<double>();
      }
      for (const auto& it : e.at("iterations")) {
        mining::IterationRecord rec;
        const auto h = it.at("homography").get<std::vector<double>>();
        if (h.size() != 9) throw IoError("iteration homography needs 9 values");
        for (int i = 0; i < 9; ++i) rec.homography.M(i / 3, i % 3) = h[i];
        rec.selected_after =
            it.at("selected_after").get<std::vector<std::size_t>>();
        r.result.iterations.push_back(std::move(rec));
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad mining report: ") + e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// metric,value,n rows for eval outputs.
struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
};

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MetricRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open CSV for writing: " + path);
  os << "metric,value,n\n";
  for (const auto& r : rows) {
    os << r.metric << "," << fmt_real(r.value) << "," << r.n << "\n";
  }
  os.flush();
  if (!os) throw IoError("failed writing CSV: " + path);
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class ProjectionMode { with_projection, without_projection, both };

struct HarnessRun {
  toy::HarnessConfig base;
  std::vector<std::uint64_t> seeds;
  ProjectionMode mode = ProjectionMode::both;
};

struct RunConfig {
  mining::MiningConfig mining;
  synth::NoiseModel noise;
  synth::SceneSpec scene;
  HarnessRun harness;  // empty seeds: pipeline skips the toy experiment
  int n_scenes = 1;
  std::string output_dir = "out";
};

inline RunConfig parse_run_config(const ojson& j) {
  detail::check_keys(
      j, {"mining", "noise", "scene", "harness", "n_scenes", "output_dir"},
      "config");
  RunConfig cfg;

  if (j.contains("mining")) {
    const auto& m = j.at("mining");
    detail::check_keys(m,
                       {"theta_c", "theta_u", "theta_h", "t_max",
                        "background_score", "alpha"},
                       "mining");
    cfg.mining.theta_c = detail::get_real(m, "theta_c", cfg.mining.theta_c);
    cfg.mining.theta_u = detail::get_real(m, "theta_u", cfg.mining.theta_u);
    cfg.mining.theta_h = detail::get_real(m, "theta_h", cfg.mining.theta_h);
    if (m.contains("t_max")) cfg.mining.t_max = m.at("t_max").get<int>();
    cfg.mining.background_score =
        detail::get_real(m, "background_score", cfg.mining.background_score);
    cfg.mining.alpha = detail::get_real(m, "alpha", cfg.mining.alpha);
  }

  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    detail::check_keys(n,
                       {"depth_laplace_base", "depth_laplace_per_meter",
                        "yaw_noise_std", "keypoint_pixel_std",
                        "size_noise_std", "sigma_fidelity", "sigma_noise_std",
                        "score_model"},
                       "noise");
    auto& nm = cfg.noise;
    nm.depth_laplace_base =
        detail::get_real(n, "depth_laplace_base", nm.depth_laplace_base);
    nm.depth_laplace_per_meter = detail::get_real(n, "depth_laplace_per_meter",
                                                  nm.depth_laplace_per_meter);
    nm.yaw_noise_std = detail::get_real(n, "yaw_noise_std", nm.yaw_noise_std);
    nm.keypoint_pixel_std =
        detail::get_real(n, "keypoint_pixel_std", nm.keypoint_pixel_std);
    nm.size_noise_std =
        detail::get_real(n, "size_noise_std", nm.size_noise_std);
    nm.sigma_fidelity =
        detail::get_real(n, "sigma_fidelity", nm.sigma_fidelity);
    nm.sigma_noise_std =
        detail::get_real(n, "sigma_noise_std", nm.sigma_noise_std);
    if (n.contains("score_model")) {
      const auto& s = n.at("score_model");
      detail::check_keys(
          s, {"base", "visibility_gain", "noise_std", "ref_depth"},
          "score_model");
      nm.score_model.base = detail::get_real(s, "base", nm.score_model.base);
      nm.score_model.visibility_gain = detail::get_real(
          s, "visibility_gain", nm.score_model.visibility_gain);
      nm.score_model.noise_std =
          detail::get_real(s, "noise_std", nm.score_model.noise_std);
      nm.score_model.ref_depth =
          detail::get_real(s, "ref_depth", nm.score_model.ref_depth);
    }
  }

  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    detail::check_keys(s,
                       {"n_objects", "x_range", "y_range", "size_ranges",
                        "ground_bump_amplitude", "seed", "rig"},
                       "scene");
    auto& sp = cfg.scene;
    if (s.contains("n_objects")) sp.n_objects = s.at("n_objects").get<int>();
    sp.x_range = detail::get_interval(s, "x_range", sp.x_range);
    sp.y_range = detail::get_interval(s, "y_range", sp.y_range);
    if (s.contains("size_ranges")) {
      const auto& sr = s.at("size_ranges");
      detail::check_keys(sr, {"length", "width", "height"}, "size_ranges");
      sp.size_ranges.length =
          detail::get_interval(sr, "length", sp.size_ranges.length);
      sp.size_ranges.width =
          detail::get_interval(sr, "width", sp.size_ranges.width);
      sp.size_ranges.height =
          detail::get_interval(sr, "height", sp.size_ranges.height);
    }
    sp.ground_bump_amplitude = detail::get_real(s, "ground_bump_amplitude",
                                                sp.ground_bump_amplitude);
    if (s.contains("seed")) sp.seed = s.at("seed").get<std::uint64_t>();
    if (s.contains("rig")) {
      const auto& r = s.at("rig");
      detail::check_keys(r, {"fx", "fy", "cx", "cy", "R", "T"}, "rig");
      sp.rig.fx = detail::get_real(r, "fx", sp.rig.fx);
      sp.rig.fy = detail::get_real(r, "fy", sp.rig.fy);
      sp.rig.cx = detail::get_real(r, "cx", sp.rig.cx);
      sp.rig.cy = detail::get_real(r, "cy", sp.rig.cy);
      if (r.contains("R")) {
        const auto& rr = r.at("R");
        if (rr.size() != 9) throw InvalidConfig("rig R must have 9 entries");
        for (int i = 0; i < 9; ++i) {
          sp.rig.R(i / 3, i % 3) = rr[i].get<double>();
        }
      }
      if (r.contains("T")) {
        const auto& tt = r.at("T");
        if (tt.size() != 3) throw InvalidConfig("rig T must have 3 entries");
        for (int i = 0; i < 3; ++i) sp.rig.T(i) = tt[i].get<double>();
      }
    }
  }

  if (j.contains("harness")) {
    const auto& h = j.at("harness");
    detail::check_keys(h,
                       {"n_params", "n_sd", "n_ud", "n_o", "lr", "steps",
                        "pseudo_label_noise", "projection", "seeds"},
                       "harness");
    auto& hb = cfg.harness.base;
    if (h.contains("n_params")) hb.n_params = h.at("n_params").get<int>();
    if (h.contains("n_sd")) hb.n_sd = h.at("n_sd").get<int>();
    if (h.contains("n_ud")) hb.n_ud = h.at("n_ud").get<int>();
    if (h.contains("n_o")) hb.n_o = h.at("n_o").get<int>();
    hb.lr = detail::get_real(h, "lr", hb.lr);
    if (h.contains("steps")) hb.steps = h.at("steps").get<int>();
    hb.pseudo_label_noise =
        detail::get_real(h, "pseudo_label_noise", hb.pseudo_label_noise);
    if (h.contains("projection")) {
      const auto mode = h.at("projection").get<std::string>();
      if (mode == "with") {
        cfg.harness.mode = ProjectionMode::with_projection;
      } else if (mode == "without") {
        cfg.harness.mode = ProjectionMode::without_projection;
      } else if (mode == "both") {
        cfg.harness.mode = ProjectionMode::both;
      } else {
        throw InvalidConfig("projection must be 'with', 'without' or 'both'");
      }
    }
    if (h.contains("seeds")) {
      cfg.harness.seeds = h.at("seeds").get<std::vector<std::uint64_t>>();
    }
  }

  if (j.contains("n_scenes")) {
    cfg.n_scenes = j.at("n_scenes").get<int>();
    if (cfg.n_scenes < 1) throw InvalidConfig("n_scenes must be >= 1");
  }
  if (j.contains("output_dir")) {
    cfg.output_dir = j.at("output_dir").get<std::string>();
  }
  cfg.harness.base.noise = cfg.noise;
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open config: " + path);
  ojson j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad config JSON: ") + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("bad config value: ") + e.what());
  }
}

}  // namespace bevmine::io
