#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "egohand/annotation.hpp"
#include "egohand/calibration_io.hpp"
#include "egohand/file_io.hpp"
#include "egohand/gesture_features.hpp"
#include "egohand/heatmap.hpp"
#include "egohand/simd/kernels.hpp"

namespace egohand::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string absolute(const std::string& path) {
  if (path.empty()) return path;
  return fs::absolute(fs::path(path)).lexically_normal().string();
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_config(const std::string& out_dir, json config, const RunContext& ctx) {
  config["threads"] = ctx.threads;
  config["isa"] = ctx.isa;
  io::write_text_file(join(out_dir, "config.json"), config.dump(2) + "\n");
}

/// Rethrows library errors with the offending file in the message.
template <typename Fn>
auto with_file(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.what(), e.index());
  }
}

/// Undistorts probe pixels every 8 px along the image border and rethrows
/// the first failure with the camera's role.
void check_invertible(const CameraModel& cam, const char* role) {
  const int W = cam.width();
  const int H = cam.height();
  const int step = 8;
  auto probe = [&](double x, double y) {
    try {
      (void)pixel_to_normalized(Vec2(x, y), cam);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(role) + " camera distortion is not invertible at pixel (" +
                                std::to_string(static_cast<int>(x)) + ", " + std::to_string(static_cast<int>(y)) +
                                ")");
    }
  };
  for (int x = 0; x < W; x += step) {
    probe(x, 0);
    probe(x, H - 1);
  }
  for (int y = 0; y < H; y += step) {
    probe(0, y);
    probe(W - 1, y);
  }
  probe(W - 1, H - 1);
}

Calibration load_calibration(const std::string& path) {
  return with_file(path, [&] {
    Calibration calib = read_calibration_file(path);
    check_invertible(calib.rig.left(), "left");
    check_invertible(calib.rig.right(), "right");
    if (calib.depth) check_invertible(*calib.depth, "depth");
    return calib;
  });
}

/// Runs fn(i) for i in [0, n) over `threads` workers with a static stride
/// schedule. The first failure by index is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> failures(n);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) {
          try {
            fn(i);
          } catch (...) {
            failures[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

void say(const RunContext& ctx, const std::string& text) {
  if (ctx.out) *ctx.out << text;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::MissingField, std::string("config field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidRecord, std::string("config field '") + key + "': " + e.what());
  }
}

json optional_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
std::optional<int> optional_int(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return field<int>(j, key);
}

const char* to_string(InitMode m) { return m == InitMode::Argmax ? "argmax" : "soft_argmax"; }
InitMode init_mode_from_string(const std::string& s) {
  if (s == "argmax") return InitMode::Argmax;
  if (s == "soft_argmax" || s == "soft") return InitMode::SoftArgmax;
  throw Error(ErrorCode::InvalidArgument, "unknown init mode '" + s + "' (expected argmax or soft_argmax)");
}

bool view_usable(ViewFlag f) { return f == ViewFlag::Visible || f == ViewFlag::OutOfImage; }

DecodedKeypoints2D targets_from_view(const ViewAnnotation& v) {
  DecodedKeypoints2D d;
  for (int j = 0; j < kNumJoints; ++j) {
    d.coords[j] = v.coords[j];
    d.confidence[j] = view_usable(v.flags[j]) && v.coords[j].allFinite() ? 1.0 : 0.0;
  }
  return d;
}

TrackFrame prediction_frame(std::int64_t frame_id, Microseconds t, const HandPose3D& pose) {
  TrackFrame f;
  f.frame_id = frame_id;
  f.t = t;
  f.pose = pose;
  for (int j = 0; j < kNumJoints; ++j) {
    f.flags[j] = pose.valid[j] ? VisibilityFlag::Original : VisibilityFlag::Invalid;
    if (!pose.valid[j]) f.pose.joints[j] = Vec3::Constant(std::nan(""));
  }
  return f;
}

std::string trace_rows(std::int64_t frame_id, const RefinementState& state) {
  std::string s;
  char buf[160];
  auto row = [&](const TraceRecord& r) {
    std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g,%.17g\n", static_cast<long long>(frame_id), r.iteration,
                  r.mean_err_left_px, r.mean_err_right_px, r.step_norm_mm);
    s += buf;
  };
  if (!state.trace.empty()) row(state.initial);
  for (const auto& r : state.trace) row(r);
  return s;
}

std::map<std::int64_t, std::size_t> index_by_frame_id(const HandPoseTrack& track) {
  std::map<std::int64_t, std::size_t> m;
  for (std::size_t i = 0; i < track.frames.size(); ++i) m[track.frames[i].frame_id] = i;
  return m;
}

json refinement_json(const RefinementConfig& r) {
  return {{"n_iters", r.n_iters},
          {"step_ratio", r.step_ratio},
          {"backtracking", r.backtracking},
          {"max_halvings", r.max_halvings},
          {"predictor", to_string(r.predictor)},
          {"patch_radius", r.patch_radius},
          {"temperature", r.temperature},
          {"downscale", r.downscale}};
}

RefinementConfig refinement_from_json(const json& j) {
  RefinementConfig r;
  r.n_iters = field<int>(j, "n_iters");
  r.step_ratio = field<std::vector<double>>(j, "step_ratio");
  r.backtracking = field<bool>(j, "backtracking");
  r.max_halvings = field<int>(j, "max_halvings");
  r.predictor = predictor_kind_from_string(field<std::string>(j, "predictor"));
  r.patch_radius = field<int>(j, "patch_radius");
  r.temperature = field<double>(j, "temperature");
  r.downscale = field<double>(j, "downscale");
  return r;
}

void apply_isa(const std::string& isa) {
  if (isa == "auto") {
    simd::set_isa(simd::detected_isa());
  } else if (isa == "scalar") {
    simd::set_isa(simd::Isa::Scalar);
  } else if (isa == "avx2") {
    simd::set_isa(simd::Isa::Avx2);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown ISA '" + isa + "' (expected auto, scalar or avx2)");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// config serialization

json to_json(const SimulateConfig& c) {
  const auto& s = c.scene;
  return {{"command", "simulate"},
          {"out", c.out},
          {"seed", s.seed},
          {"duration_s", s.duration_s},
          {"frame_rate", s.frame_rate},
          {"lighting", to_string(s.lighting)},
          {"hands", to_string(s.hands)},
          {"contrast_step", s.contrast_step},
          {"noise_rate", s.resolved_noise_rate()},
          {"depth_hole_fraction", s.depth_hole_fraction},
          {"label", optional_json(s.label)}};
}

json to_json(const EncodeConfig& c) {
  json j{{"command", "encode"},
         {"events", c.events},
         {"delta_t_us", c.delta_t},
         {"mode", to_string(c.mode)},
         {"t_end_us", c.t_end},
         {"stride_us", c.stride},
         {"out", c.out}};
  j["sensor"] = c.sensor ? json{c.sensor->width, c.sensor->height} : json(nullptr);
  return j;
}

json to_json(const AnnotateConfig& c) {
  return {{"command", "annotate"}, {"kp2d", c.kp2d},       {"calib", c.calib}, {"out", c.out},
          {"window", c.window},    {"max_gap", c.max_gap}, {"tags", c.tags},   {"label", optional_json(c.label)}};
}

json to_json(const SolveConfig& c) {
  return {{"command", "solve"}, {"calib", c.calib}, {"annotation", c.annotation}, {"heatmaps", c.heatmaps},
          {"gt", c.gt},         {"out", c.out},     {"init", to_string(c.init)}, {"refine", refinement_json(c.refine)}};
}

json to_json(const EvalConfig& c) {
  return {{"command", "eval"}, {"pred", c.pred},   {"gt", c.gt}, {"out", c.out}, {"rigid", c.rigid},
          {"thresholds", c.thresholds}};
}

json to_json(const FeaturesConfig& c) {
  return {{"command", "features"}, {"annotations", c.annotations}, {"out", c.out}, {"classify", c.classify}};
}

json to_json(const RenderHeatmapsConfig& c) {
  return {{"command", "render-heatmaps"},
          {"annotation", c.annotation},
          {"calib", c.calib},
          {"out", c.out},
          {"downscale", c.downscale},
          {"sigma", c.sigma},
          {"noise_px", c.noise_px},
          {"seed", c.seed}};
}

// ---------------------------------------------------------------------------
// simulate

void run_simulate(const SimulateConfig& c, const RunContext& ctx) {
  const SimOutput sim = simulate(c.scene, ctx.threads);
  const auto files = export_dataset(sim, c.out);
  write_config(c.out, to_json(c), ctx);
  std::ostringstream os;
  os << "simulated " << sim.track.frames.size() << " frames, " << sim.events.left.size() << " + "
     << sim.events.right.size() << " events; " << files.size() << " files in " << c.out << "\n";
  say(ctx, os.str());
}

// ---------------------------------------------------------------------------
// encode

void run_encode(EncodeConfig c, const RunContext& ctx) {
  const EventStream stream = with_file(c.events, [&] {
    return read_event_file(c.events, event_format_from_path(c.events), c.sensor);
  });
  if (c.delta_t == 0 || c.delta_t > kMaxDeltaT) throw Error(ErrorCode::InvalidArgument, "delta_t must lie in (0, 2^32]");
  if (c.t_end.empty()) {
    const Microseconds stride = c.stride == 0 ? c.delta_t : c.stride;
    c.stride = stride;
    const Microseconds last = stream.empty() ? 0 : stream.timestamps().back();
    for (Microseconds t = stride; t <= last; t += stride) c.t_end.push_back(t);
    if (c.t_end.empty() || c.t_end.back() < last) c.t_end.push_back(c.t_end.empty() ? last : c.t_end.back() + stride);
  }

  std::string index = "window,t_end_us,events,file\n";
  for (std::size_t i = 0; i < c.t_end.size(); ++i) {
    const EventWindow w = window_slice(stream, c.t_end[i], c.delta_t);
    const LnesSurface s = encode_lnes(w, stream.width(), stream.height(), c.mode, ctx.threads);
    char name[32];
    std::snprintf(name, sizeof name, "lnes_%06zu.lns", i);
    io::write_file(join(c.out, name), write_lnes(s));
    index += std::to_string(i) + "," + std::to_string(c.t_end[i]) + "," + std::to_string(w.size()) + "," + name + "\n";
  }
  io::write_text_file(join(c.out, "windows.csv"), index);
  write_config(c.out, to_json(c), ctx);
  say(ctx, "encoded " + std::to_string(c.t_end.size()) + " windows from " + std::to_string(stream.size()) +
               " events\n");
}

// ---------------------------------------------------------------------------
// annotate

void run_annotate(const AnnotateConfig& c, const RunContext& ctx) {
  const Calibration calib = load_calibration(c.calib);
  if (!calib.depth) throw Error(ErrorCode::MissingField, c.calib + ": calibration has no depth camera");
  const auto frames = with_file(c.kp2d, [&] { return parse_kp2d(io::read_text_file(c.kp2d)); });
  const fs::path base = fs::path(c.kp2d).parent_path();

  HandPoseTrack track;
  track.frames.resize(frames.size());
  parallel_for(frames.size(), ctx.threads, [&](std::size_t i) {
    const std::string depth_path = (base / frames[i].depth_file).string();
    const DepthMap depth = with_file(depth_path, [&] { return read_depth_file(depth_path); });
    const LiftedPose lifted = lift_keypoints(frames[i].keypoints, depth, *calib.depth, c.window);
    TrackFrame& f = track.frames[i];
    f.frame_id = frames[i].frame_id;
    f.t = frames[i].t;
    f.pose = lifted.pose;
    f.flags = lifted.flags;
    for (int j = 0; j < kNumJoints; ++j) {
      if (!f.pose.valid[j]) f.pose.joints[j] = Vec3::Constant(std::nan(""));
    }
  });
  with_file(c.kp2d, [&] {
    track.validate();
    return 0;
  });

  Annotation ann;
  ann.track = interpolate_track(track, c.max_gap);
  ann.views = project_annotations(ann.track, calib.rig);
  ann.metadata.scenario = c.tags;
  ann.metadata.label = c.label;
  ann.metadata.extra["source"] = "annotate";
  ann.metadata.extra["window"] = std::to_string(c.window);
  ann.metadata.extra["max_gap"] = std::to_string(c.max_gap);
  write_annotation_file(join(c.out, "annotation.json"), ann);
  write_config(c.out, to_json(c), ctx);

  std::size_t counts[3] = {0, 0, 0};
  for (const auto& f : ann.track.frames) {
    for (auto flag : f.flags) {
      counts[flag == VisibilityFlag::Original ? 0 : flag == VisibilityFlag::Interpolated ? 1 : 2]++;
    }
  }
  say(ctx, "annotated " + std::to_string(ann.track.frames.size()) + " frames: " + std::to_string(counts[0]) +
               " original, " + std::to_string(counts[1]) + " interpolated, " + std::to_string(counts[2]) +
               " invalid joints\n");
}

// ---------------------------------------------------------------------------
// solve

namespace {

struct HeatmapFrame {
  std::int64_t frame_id = 0;
  Microseconds t = 0;
  std::string left, right;
};

struct HeatmapIndex {
  double downscale = 1.0;
  AnnotationMetadata metadata;
  std::vector<HeatmapFrame> frames;
};

HeatmapIndex read_heatmap_index(const std::string& path) {
  json doc;
  try {
    doc = json::parse(io::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("heatmap index is not valid JSON: ") + e.what());
  }
  HeatmapIndex idx;
  idx.downscale = field<double>(doc, "downscale");
  const fs::path base = fs::path(path).parent_path();
  if (doc.contains("metadata")) {
    const auto& m = doc["metadata"];
    if (m.contains("scenario")) idx.metadata.scenario = m["scenario"].get<std::vector<std::string>>();
    idx.metadata.label = optional_int(m, "label");
  }
  for (const auto& f : field<json>(doc, "frames")) {
    HeatmapFrame hf;
    hf.frame_id = field<std::int64_t>(f, "frame_id");
    hf.t = field<Microseconds>(f, "t_us");
    hf.left = (base / field<std::string>(f, "left")).string();
    hf.right = (base / field<std::string>(f, "right")).string();
    idx.frames.push_back(std::move(hf));
  }
  return idx;
}

}  // namespace

void run_solve(const SolveConfig& c, const RunContext& ctx) {
  if (c.annotation.empty() == c.heatmaps.empty()) {
    throw Error(ErrorCode::InvalidArgument, "solve needs exactly one of --annotation or --heatmaps");
  }
  const Calibration calib = load_calibration(c.calib);
  RefinementConfig cfg = c.refine;

  std::optional<Annotation> gt;
  std::map<std::int64_t, std::size_t> gt_index;
  if (cfg.predictor == PredictorKind::Oracle) {
    if (c.gt.empty()) throw Error(ErrorCode::InvalidArgument, "the oracle predictor needs --gt");
    gt = with_file(c.gt, [&] { return read_annotation_file(c.gt); });
    gt_index = index_by_frame_id(gt->track);
  }
  auto gt_pose = [&](std::int64_t frame_id) -> const HandPose3D& {
    const auto it = gt_index.find(frame_id);
    if (it == gt_index.end()) {
      throw Error(ErrorCode::MissingField, c.gt + ": no ground truth for frame " + std::to_string(frame_id));
    }
    return gt->track.frames[it->second].pose;
  };
  auto solve_frame = [&](const HandPose3D& init, const EvidenceSource& l, const EvidenceSource& r,
                         std::int64_t frame_id) {
    if (cfg.predictor == PredictorKind::Oracle) {
      return refine(init, l, r, calib.rig, cfg, OraclePredictor(gt_pose(frame_id)));
    }
    return refine(init, l, r, calib.rig, cfg, GaussNewtonPredictor());
  };

  Annotation pred;
  std::vector<std::string> traces;

  if (!c.annotation.empty()) {
    const Annotation input = with_file(c.annotation, [&] { return read_annotation_file(c.annotation); });
    if (input.views.size() != input.track.frames.size()) {
      throw Error(ErrorCode::MissingField, c.annotation + ": annotation carries no per-view 2D blocks");
    }
    if (cfg.downscale == 0.0) cfg.downscale = 1.0;
    cfg.validate();
    pred.metadata = input.metadata;
    pred.track.frames.resize(input.track.frames.size());
    traces.resize(input.track.frames.size());
    parallel_for(input.track.frames.size(), ctx.threads, [&](std::size_t i) {
      const auto& src = input.track.frames[i];
      const DecodedKeypoints2D tl = targets_from_view(input.views[i].left);
      const DecodedKeypoints2D tr = targets_from_view(input.views[i].right);
      const HandPose3D init = triangulate(tl, tr, calib.rig);
      const FixedEvidence el(tl), er(tr);
      const RefinementState state = solve_frame(init, el, er, src.frame_id);
      pred.track.frames[i] = prediction_frame(src.frame_id, src.t, state.pose);
      traces[i] = trace_rows(src.frame_id, state);
    });
  } else {
    const HeatmapIndex index = with_file(c.heatmaps, [&] { return read_heatmap_index(c.heatmaps); });
    if (cfg.downscale == 0.0) cfg.downscale = index.downscale;
    cfg.validate();
    pred.metadata = index.metadata;
    pred.track.frames.resize(index.frames.size());
    traces.resize(index.frames.size());
    parallel_for(index.frames.size(), ctx.threads, [&](std::size_t i) {
      const auto& hf = index.frames[i];
      const HeatmapStack left = with_file(hf.left, [&] { return read_heatmap_file(hf.left); });
      const HeatmapStack right = with_file(hf.right, [&] { return read_heatmap_file(hf.right); });
      const auto decode = [&](const HeatmapStack& s) {
        return c.init == InitMode::Argmax ? decode_argmax(s, cfg.downscale)
                                          : decode_soft_argmax(s, cfg.temperature, cfg.downscale);
      };
      const HandPose3D init = triangulate(decode(left), decode(right), calib.rig);
      RefinementState state;
      if (cfg.predictor == PredictorKind::Oracle) {
        state = refine(init, left, right, calib.rig, cfg, OraclePredictor(gt_pose(hf.frame_id)));
      } else {
        state = refine(init, left, right, calib.rig, cfg, GaussNewtonPredictor());
      }
      pred.track.frames[i] = prediction_frame(hf.frame_id, hf.t, state.pose);
      traces[i] = trace_rows(hf.frame_id, state);
    });
  }

  pred.metadata.extra["source"] = "solve";
  pred.views = project_annotations(pred.track, calib.rig);
  write_annotation_file(join(c.out, "pred.json"), pred);
  std::string trace = "frame,iteration,mean_err_L_px,mean_err_R_px,step_norm_mm\n";
  for (const auto& t : traces) trace += t;
  io::write_text_file(join(c.out, "trace.csv"), trace);

  SolveConfig resolved = c;
  resolved.refine = cfg;
  write_config(c.out, to_json(resolved), ctx);
  say(ctx, "solved " + std::to_string(pred.track.frames.size()) + " frames\n");
}

// ---------------------------------------------------------------------------
// eval

EvaluationReport run_eval(const EvalConfig& c, const RunContext& ctx) {
  const Annotation pred = with_file(c.pred, [&] { return read_annotation_file(c.pred); });
  const Annotation gt = with_file(c.gt, [&] { return read_annotation_file(c.gt); });
  const auto gt_index = index_by_frame_id(gt.track);
  const bool with_2d = !pred.views.empty() && !gt.views.empty();

  std::vector<FrameSample> samples;
  samples.reserve(pred.track.frames.size());
  for (std::size_t i = 0; i < pred.track.frames.size(); ++i) {
    const auto& pf = pred.track.frames[i];
    const auto it = gt_index.find(pf.frame_id);
    if (it == gt_index.end()) {
      throw Error(ErrorCode::MissingField, c.gt + ": no ground truth for frame " + std::to_string(pf.frame_id), i);
    }
    const auto& gf = gt.track.frames[it->second];
    FrameSample s;
    s.pred = pf.pose;
    s.gt = gf.pose;
    s.mask = joint_mask(pf.pose, gf.pose);
    s.tags = gt.metadata.scenario;
    if (with_2d) {
      const StereoAnnotation& pv = pred.views[i];
      const StereoAnnotation& gv = gt.views[it->second];
      const ViewAnnotation* p[2] = {&pv.left, &pv.right};
      const ViewAnnotation* g[2] = {&gv.left, &gv.right};
      for (int v = 0; v < 2; ++v) {
        s.pred_2d[v] = p[v]->coords;
        s.gt_2d[v] = g[v]->coords;
        for (int j = 0; j < kNumJoints; ++j) {
          s.mask_2d[v][j] = g[v]->flags[j] == ViewFlag::Visible && view_usable(p[v]->flags[j]);
        }
      }
    }
    samples.push_back(std::move(s));
  }

  EvaluationOptions opts;
  opts.align = c.rigid ? AlignMode::Rigid : AlignMode::Similarity;
  opts.n_thresholds = c.thresholds;
  opts.threads = ctx.threads;
  const EvaluationReport report = evaluate(samples, opts);
  const std::string text = report_to_text(report);
  io::write_text_file(join(c.out, "report.txt"), text);
  io::write_text_file(join(c.out, "pck.tsv"), pck_curves_to_text(report));
  write_config(c.out, to_json(c), ctx);
  say(ctx, text);
  return report;
}

// ---------------------------------------------------------------------------
// features

void run_features(const FeaturesConfig& c, const RunContext& ctx) {
  if (c.annotations.empty()) throw Error(ErrorCode::InvalidArgument, "features needs at least one annotation");
  std::vector<GestureSequence> sequences(c.annotations.size());
  parallel_for(c.annotations.size(), ctx.threads, [&](std::size_t i) {
    const std::string& path = c.annotations[i];
    sequences[i] = with_file(path, [&] {
      const Annotation ann = read_annotation_file(path);
      if (ann.views.size() != ann.track.frames.size()) {
        throw Error(ErrorCode::MissingField, "annotation carries no per-view 2D blocks");
      }
      std::vector<StereoPose2D> poses(ann.views.size());
      std::vector<Microseconds> times(ann.views.size());
      for (std::size_t k = 0; k < ann.views.size(); ++k) {
        const ViewAnnotation* views[2] = {&ann.views[k].left, &ann.views[k].right};
        for (int v = 0; v < 2; ++v) {
          poses[k].view[v] = views[v]->coords;
          for (int j = 0; j < kNumJoints; ++j) poses[k].valid[v][j] = view_usable(views[v]->flags[j]);
        }
        times[k] = ann.track.frames[k].t;
      }
      return build_sequence(poses, times, ann.metadata.label);
    });
  });
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq_%03zu.csv", i);
    io::write_text_file(join(c.out, name), sequence_to_text(sequences[i]));
  }
  std::string summary = "sequences " + std::to_string(sequences.size()) + "\n";
  if (c.classify) {
    const double acc = CentroidClassifier::leave_one_out_accuracy(sequences);
    char buf[64];
    std::snprintf(buf, sizeof buf, "loo_accuracy %.6f\n", acc);
    summary += buf;
    io::write_text_file(join(c.out, "classification.txt"), summary);
  }
  write_config(c.out, to_json(c), ctx);
  say(ctx, summary);
}

// ---------------------------------------------------------------------------
// render-heatmaps

void run_render_heatmaps(const RenderHeatmapsConfig& c, const RunContext& ctx) {
  if (!(c.downscale > 0.0) || !(c.sigma > 0.0) || !(c.noise_px >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "downscale and sigma must be positive, noise_px >= 0");
  }
  const Calibration calib = load_calibration(c.calib);
  const Annotation ann = with_file(c.annotation, [&] { return read_annotation_file(c.annotation); });
  if (ann.views.size() != ann.track.frames.size()) {
    throw Error(ErrorCode::MissingField, c.annotation + ": annotation carries no per-view 2D blocks");
  }
  const CameraModel* cams[2] = {&calib.rig.left(), &calib.rig.right()};
  const char* prefix[2] = {"L", "R"};
  json frames = json::array();
  std::vector<std::array<std::string, 2>> names(ann.track.frames.size());
  parallel_for(ann.track.frames.size(), ctx.threads, [&](std::size_t i) {
    const ViewAnnotation* views[2] = {&ann.views[i].left, &ann.views[i].right};
    for (int v = 0; v < 2; ++v) {
      std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                        static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(v)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> noise(0.0, 1.0);
      std::vector<Vec2> nodes(kNumJoints);
      std::array<bool, kNumJoints> visible{};
      for (int j = 0; j < kNumJoints; ++j) {
        const double nx = noise(rng);
        const double ny = noise(rng);
        nodes[j] = (views[v]->coords[j] + c.noise_px * Vec2(nx, ny)) / c.downscale;
        visible[j] = views[v]->flags[j] == ViewFlag::Visible;
      }
      const int w = static_cast<int>(std::lround(cams[v]->width() / c.downscale));
      const int h = static_cast<int>(std::lround(cams[v]->height() / c.downscale));
      const HeatmapStack stack = render_gaussian(nodes, visible, c.sigma, w, h);
      char name[48];
      std::snprintf(name, sizeof name, "heatmaps/%s_%06zu.hms", prefix[v], i);
      write_heatmap_file(join(c.out, name), stack);
      names[i][v] = name;
    }
  });
  for (std::size_t i = 0; i < ann.track.frames.size(); ++i) {
    frames.push_back({{"frame_id", ann.track.frames[i].frame_id},
                      {"t_us", ann.track.frames[i].t},
                      {"left", names[i][0]},
                      {"right", names[i][1]}});
  }
  json meta{{"scenario", ann.metadata.scenario}, {"label", optional_json(ann.metadata.label)}};
  json index{{"format", "egohand-heatmap-index-v1"},
             {"downscale", c.downscale},
             {"sigma", c.sigma},
             {"metadata", meta},
             {"frames", frames}};
  io::write_text_file(join(c.out, "index.json"), index.dump(1) + "\n");
  write_config(c.out, to_json(c), ctx);
  say(ctx, "rendered " + std::to_string(ann.track.frames.size()) + " stereo heatmap frames\n");
}

// ---------------------------------------------------------------------------
// replay

void run_replay(const std::string& config_path, const RunContext& base_ctx) {
  json j;
  try {
    j = json::parse(io::read_text_file(config_path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedHeader, config_path + ": not valid JSON: " + e.what());
  }
  RunContext ctx = base_ctx;
  if (j.contains("threads")) ctx.threads = field<unsigned>(j, "threads");
  if (j.contains("isa")) ctx.isa = field<std::string>(j, "isa");
  apply_isa(ctx.isa);

  const auto cmd = field<std::string>(j, "command");
  if (cmd == "simulate") {
    SimulateConfig c;
    c.out = field<std::string>(j, "out");
    c.scene.seed = field<std::uint64_t>(j, "seed");
    c.scene.duration_s = field<double>(j, "duration_s");
    c.scene.frame_rate = field<double>(j, "frame_rate");
    c.scene.lighting = lighting_from_string(field<std::string>(j, "lighting"));
    c.scene.hands = hand_mode_from_string(field<std::string>(j, "hands"));
    c.scene.contrast_step = field<double>(j, "contrast_step");
    c.scene.noise_rate = field<double>(j, "noise_rate");
    c.scene.depth_hole_fraction = field<double>(j, "depth_hole_fraction");
    c.scene.label = optional_int(j, "label");
    run_simulate(c, ctx);
  } else if (cmd == "encode") {
    EncodeConfig c;
    c.events = field<std::string>(j, "events");
    if (j.contains("sensor") && !j["sensor"].is_null()) {
      const auto s = field<std::vector<std::uint16_t>>(j, "sensor");
      if (s.size() != 2) throw Error(ErrorCode::InvalidRecord, "config field 'sensor' must be [W, H]");
      c.sensor = SensorSize{s[0], s[1]};
    }
    c.delta_t = field<Microseconds>(j, "delta_t_us");
    c.mode = lnes_mode_from_string(field<std::string>(j, "mode"));
    c.t_end = field<std::vector<Microseconds>>(j, "t_end_us");
    c.stride = field<Microseconds>(j, "stride_us");
    c.out = field<std::string>(j, "out");
    run_encode(c, ctx);
  } else if (cmd == "annotate") {
    AnnotateConfig c;
    c.kp2d = field<std::string>(j, "kp2d");
    c.calib = field<std::string>(j, "calib");
    c.out = field<std::string>(j, "out");
    c.window = field<int>(j, "window");
    c.max_gap = field<int>(j, "max_gap");
    c.tags = field<std::vector<std::string>>(j, "tags");
    c.label = optional_int(j, "label");
    run_annotate(c, ctx);
  } else if (cmd == "solve") {
    SolveConfig c;
    c.calib = field<std::string>(j, "calib");
    c.annotation = field<std::string>(j, "annotation");
    c.heatmaps = field<std::string>(j, "heatmaps");
    c.gt = field<std::string>(j, "gt");
    c.out = field<std::string>(j, "out");
    c.init = init_mode_from_string(field<std::string>(j, "init"));
    c.refine = refinement_from_json(field<json>(j, "refine"));
    run_solve(c, ctx);
  } else if (cmd == "eval") {
    EvalConfig c;
    c.pred = field<std::string>(j, "pred");
    c.gt = field<std::string>(j, "gt");
    c.out = field<std::string>(j, "out");
    c.rigid = field<bool>(j, "rigid");
    c.thresholds = field<int>(j, "thresholds");
    run_eval(c, ctx);
  } else if (cmd == "features") {
    FeaturesConfig c;
    c.annotations = field<std::vector<std::string>>(j, "annotations");
    c.out = field<std::string>(j, "out");
    c.classify = field<bool>(j, "classify");
    run_features(c, ctx);
  } else if (cmd == "render-heatmaps") {
    RenderHeatmapsConfig c;
    c.annotation = field<std::string>(j, "annotation");
    c.calib = field<std::string>(j, "calib");
    c.out = field<std::string>(j, "out");
    c.downscale = field<double>(j, "downscale");
    c.sigma = field<double>(j, "sigma");
    c.noise_px = field<double>(j, "noise_px");
    c.seed = field<std::uint64_t>(j, "seed");
    run_render_heatmaps(c, ctx);
  } else {
    throw Error(ErrorCode::InvalidRecord, config_path + ": unknown command '" + cmd + "'");
  }
}

// ---------------------------------------------------------------------------
// command line

namespace {

SensorSize parse_sensor(const std::string& s) {
  unsigned w = 0, h = 0;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> w >> x >> h) || x != 'x' || w == 0 || h == 0 || w > 65535 || h > 65535) {
    throw Error(ErrorCode::InvalidArgument, "sensor size must look like 1280x720");
  }
  return {static_cast<std::uint16_t>(w), static_cast<std::uint16_t>(h)};
}

}  // namespace

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stereo event-camera hand-pose toolkit"};
  app.require_subcommand(1);
  RunContext ctx;
  ctx.out = &out;
  app.add_option("--threads", ctx.threads, "Worker threads for per-frame work")->capture_default_str()
      ->check(CLI::Range(1u, 1024u));
  app.add_option("--isa", ctx.isa, "Kernel variant: auto, scalar or avx2")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

  // simulate
  SimulateConfig sim;
  std::string lighting = "normal", hands = "bimanual";
  double noise_rate = 0.0;
  int sim_label = -1;
  auto* cmd_sim = app.add_subcommand("simulate", "Generate a synthetic stereo event dataset");
  cmd_sim->add_option("--out", sim.out, "Output directory")->required();
  cmd_sim->add_option("--seed", sim.scene.seed, "Random seed")->capture_default_str();
  cmd_sim->add_option("--duration", sim.scene.duration_s, "Scene length, seconds")->capture_default_str();
  cmd_sim->add_option("--fps", sim.scene.frame_rate, "Ground-truth frame rate, Hz")->capture_default_str();
  cmd_sim->add_option("--lighting", lighting, "normal or low")->capture_default_str()
      ->check(CLI::IsMember({"normal", "low"}));
  cmd_sim->add_option("--hands", hands, "single or bimanual")->capture_default_str()
      ->check(CLI::IsMember({"single", "bimanual"}));
  cmd_sim->add_option("--contrast-step", sim.scene.contrast_step, "Pixels of motion per event")
      ->capture_default_str();
  auto* opt_noise = cmd_sim->add_option("--noise-rate", noise_rate,
                                        "Background events per second per pixel (default: lighting tier)");
  cmd_sim->add_option("--hole-fraction", sim.scene.depth_hole_fraction, "Fraction of depth pixels carved out")
      ->capture_default_str();
  auto* opt_sim_label = cmd_sim->add_option("--label", sim_label, "Gesture class recorded in the metadata");

  // encode
  EncodeConfig enc;
  std::string sensor, mode = "sum";
  auto* cmd_enc = app.add_subcommand("encode", "Encode event windows into LNES surfaces");
  cmd_enc->add_option("--events", enc.events, "Event file (.evs binary or .csv)")->required();
  auto* opt_sensor = cmd_enc->add_option("--sensor", sensor, "Sensor size WxH (required for CSV)");
  cmd_enc->add_option("--delta-t", enc.delta_t, "Window length, microseconds")->capture_default_str();
  cmd_enc->add_option("--mode", mode, "sum or latest")->capture_default_str()
      ->check(CLI::IsMember({"sum", "latest"}));
  cmd_enc->add_option("--t-end", enc.t_end, "Window end times, microseconds");
  cmd_enc->add_option("--stride", enc.stride, "Spacing of window ends when --t-end is absent (default delta-t)");
  cmd_enc->add_option("--out", enc.out, "Output directory")->required();

  // annotate
  AnnotateConfig ann;
  std::string manifest;
  int ann_label = -1;
  auto* cmd_ann = app.add_subcommand("annotate", "Lift depth-camera keypoints to dense stereo labels");
  cmd_ann->add_option("--kp2d", ann.kp2d, "Depth-camera keypoint file")->required();
  cmd_ann->add_option("--calib", ann.calib, "Calibration with a depth camera")->required();
  cmd_ann->add_option("--out", ann.out, "Output directory")->required();
  cmd_ann->add_option("--window", ann.window, "Depth hole-filling window (odd)")->capture_default_str();
  cmd_ann->add_option("--max-gap", ann.max_gap, "Longest gap bridged by interpolation, frames")
      ->capture_default_str();
  cmd_ann->add_option("--tag", ann.tags, "Scenario tag (repeatable)");
  auto* opt_ann_label = cmd_ann->add_option("--label", ann_label, "Gesture class");
  cmd_ann->add_option("--manifest", manifest, "Take scenario tags and label from a simulator manifest");

  // solve
  SolveConfig sol;
  std::string predictor = "gauss_newton", init = "argmax";
  bool no_backtracking = false;
  auto* cmd_sol = app.add_subcommand("solve", "Triangulate and refine 3D poses");
  cmd_sol->add_option("--calib", sol.calib, "Stereo calibration")->required();
  auto* opt_annotation = cmd_sol->add_option("--annotation", sol.annotation, "Annotation with per-view 2D");
  auto* opt_heatmaps = cmd_sol->add_option("--heatmaps", sol.heatmaps, "Heatmap index (index.json)");
  opt_annotation->excludes(opt_heatmaps);
  cmd_sol->add_option("--gt", sol.gt, "Ground-truth annotation (oracle predictor)");
  cmd_sol->add_option("--out", sol.out, "Output directory")->required();
  cmd_sol->add_option("--iters", sol.refine.n_iters, "Refinement iterations")->capture_default_str();
  cmd_sol->add_option("--step-ratio", sol.refine.step_ratio, "Step ratio per iteration (last repeats)");
  cmd_sol->add_flag("--no-backtracking", no_backtracking, "Apply steps without backtracking");
  cmd_sol->add_option("--max-halvings", sol.refine.max_halvings, "Backtracking halvings")->capture_default_str();
  cmd_sol->add_option("--predictor", predictor, "gauss_newton or oracle")->capture_default_str()
      ->check(CLI::IsMember({"gauss_newton", "oracle"}));
  cmd_sol->add_option("--patch-radius", sol.refine.patch_radius, "Evidence patch half-size, nodes")
      ->capture_default_str();
  cmd_sol->add_option("--temperature", sol.refine.temperature, "Soft-argmax temperature")->capture_default_str();
  auto* opt_downscale =
      cmd_sol->add_option("--downscale", sol.refine.downscale, "Sensor pixels per heatmap node (default: from index)");
  cmd_sol->add_option("--init", init, "Initial decode for heatmaps: argmax or soft_argmax")
      ->capture_default_str()
      ->check(CLI::IsMember({"argmax", "soft_argmax"}));

  // eval
  EvalConfig ev;
  auto* cmd_eval = app.add_subcommand("eval", "Score predicted poses against ground truth");
  cmd_eval->add_option("--pred", ev.pred, "Predicted annotation")->required();
  cmd_eval->add_option("--gt", ev.gt, "Ground-truth annotation")->required();
  cmd_eval->add_option("--out", ev.out, "Output directory")->required();
  cmd_eval->add_flag("--rigid", ev.rigid, "Rigid instead of similarity alignment for PA-MPJPE");
  cmd_eval->add_option("--thresholds", ev.thresholds, "PCK thresholds over [0, 50] mm")->capture_default_str();

  // features
  FeaturesConfig feat;
  auto* cmd_feat = app.add_subcommand("features", "Export normalized gesture feature sequences");
  cmd_feat->add_option("--annotation", feat.annotations, "Annotation per sequence (repeatable)")->required();
  cmd_feat->add_option("--out", feat.out, "Output directory")->required();
  cmd_feat->add_flag("--classify", feat.classify, "Report leave-one-out nearest-centroid accuracy");

  // render-heatmaps
  RenderHeatmapsConfig rh;
  auto* cmd_rh = app.add_subcommand("render-heatmaps", "Render Gaussian heatmaps from annotated 2D");
  cmd_rh->add_option("--annotation", rh.annotation, "Annotation with per-view 2D")->required();
  cmd_rh->add_option("--calib", rh.calib, "Stereo calibration")->required();
  cmd_rh->add_option("--out", rh.out, "Output directory")->required();
  cmd_rh->add_option("--downscale", rh.downscale, "Sensor pixels per node")->capture_default_str();
  cmd_rh->add_option("--sigma", rh.sigma, "Gaussian sigma, nodes")->capture_default_str();
  cmd_rh->add_option("--noise-px", rh.noise_px, "Peak displacement std, sensor pixels")->capture_default_str();
  cmd_rh->add_option("--seed", rh.seed, "Noise seed")->capture_default_str();

  // replay
  std::string replay_path;
  auto* cmd_replay = app.add_subcommand("replay", "Re-run a command from its config.json snapshot");
  cmd_replay->add_option("config", replay_path, "config.json written by an earlier run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    apply_isa(ctx.isa);
    if (cmd_sim->parsed()) {
      sim.out = absolute(sim.out);
      sim.scene.lighting = lighting_from_string(lighting);
      sim.scene.hands = hand_mode_from_string(hands);
      sim.scene.noise_rate = opt_noise->count() ? noise_rate : default_noise_rate(sim.scene.lighting);
      if (opt_sim_label->count()) sim.scene.label = sim_label;
      run_simulate(sim, ctx);
    } else if (cmd_enc->parsed()) {
      enc.events = absolute(enc.events);
      enc.out = absolute(enc.out);
      enc.mode = lnes_mode_from_string(mode);
      if (opt_sensor->count()) enc.sensor = parse_sensor(sensor);
      run_encode(enc, ctx);
    } else if (cmd_ann->parsed()) {
      ann.kp2d = absolute(ann.kp2d);
      ann.calib = absolute(ann.calib);
      ann.out = absolute(ann.out);
      if (!manifest.empty()) {
        const json m = with_file(manifest, [&] {
          try {
            return json::parse(io::read_text_file(manifest));
          } catch (const json::parse_error& e) {
            throw Error(ErrorCode::MalformedHeader, std::string("not valid JSON: ") + e.what());
          }
        });
        if (ann.tags.empty() && m.contains("scenario")) ann.tags = m["scenario"].get<std::vector<std::string>>();
        if (!opt_ann_label->count() && m.contains("label")) ann.label = m["label"].get<int>();
      }
      if (opt_ann_label->count()) ann.label = ann_label;
      run_annotate(ann, ctx);
    } else if (cmd_sol->parsed()) {
      if (!opt_annotation->count() && !opt_heatmaps->count()) {
        err << "solve: one of --annotation or --heatmaps is required\n";
        return kExitUsage;
      }
      sol.calib = absolute(sol.calib);
      sol.annotation = absolute(sol.annotation);
      sol.heatmaps = absolute(sol.heatmaps);
      sol.gt = absolute(sol.gt);
      sol.out = absolute(sol.out);
      if (!opt_downscale->count()) sol.refine.downscale = 0.0;
      sol.refine.backtracking = !no_backtracking;
      sol.refine.predictor = predictor_kind_from_string(predictor);
      sol.init = init_mode_from_string(init);
      run_solve(sol, ctx);
    } else if (cmd_eval->parsed()) {
      ev.pred = absolute(ev.pred);
      ev.gt = absolute(ev.gt);
      ev.out = absolute(ev.out);
      run_eval(ev, ctx);
    } else if (cmd_feat->parsed()) {
      for (auto& a : feat.annotations) a = absolute(a);
      feat.out = absolute(feat.out);
      run_features(feat, ctx);
    } else if (cmd_rh->parsed()) {
      rh.annotation = absolute(rh.annotation);
      rh.calib = absolute(rh.calib);
      rh.out = absolute(rh.out);
      run_render_heatmaps(rh, ctx);
    } else if (cmd_replay->parsed()) {
      run_replay(replay_path, ctx);
    }
  } catch (const Error& e) {
    err << "error: " << e.what();
    if (e.index()) err << " (index " << *e.index() << ")";
    err << "\n";
    return is_numeric_error(e.code()) ? kExitNumeric : kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace egohand::cli
