#include "egohand/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <thread>

#include <json.hpp>

#include "egohand/calibration_io.hpp"
#include "egohand/file_io.hpp"

namespace egohand {

Vec3 Oscillation::at(double t_seconds) const {
  return amplitude * std::sin(2.0 * std::numbers::pi * frequency_hz * t_seconds + phase);
}

void MotionSpec::validate() const {
  if (duration == 0) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) {
    throw Error(ErrorCode::InvalidArgument, "frame rate must be positive");
  }
  auto check = [](const Oscillation& o, std::size_t idx) {
    if (!o.amplitude.allFinite() || !std::isfinite(o.phase) || !(o.frequency_hz >= 0.0) ||
        !std::isfinite(o.frequency_hz)) {
      throw Error(ErrorCode::InvalidArgument, "oscillation parameters must be finite", idx);
    }
  };
  for (int j = 0; j < kNumJoints; ++j) {
    if (!base[j].allFinite()) throw Error(ErrorCode::InvalidArgument, "base pose must be finite", j);
    check(articulation[j], j);
  }
  check(translation[0], 0);
  check(translation[1], 1);
}

std::size_t MotionSpec::frame_count() const {
  return static_cast<std::size_t>(std::floor(static_cast<double>(duration) * 1e-6 * frame_rate));
}

Microseconds MotionSpec::frame_time(std::size_t k) const {
  return static_cast<Microseconds>(std::llround(static_cast<double>(k) * 1e6 / frame_rate));
}

namespace {

Vec3 joint_at(const MotionSpec& spec, int j, double t) {
  return spec.base[j] + spec.articulation[j].at(t) + spec.translation[hand_of(j)].at(t);
}

}  // namespace

HandPose3D pose_at(const MotionSpec& spec, double t_seconds) {
  HandPose3D pose;
  for (int j = 0; j < kNumJoints; ++j) {
    pose.joints[j] = joint_at(spec, j, t_seconds);
    pose.valid[j] = true;
  }
  return pose;
}

HandPoseTrack synth_trajectory(const MotionSpec& spec, const StereoRig& rig) {
  spec.validate();
  HandPoseTrack track;
  const std::size_t n = spec.frame_count();
  track.frames.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    TrackFrame f;
    f.frame_id = static_cast<std::int64_t>(k);
    f.t = spec.frame_time(k);
    f.pose = pose_at(spec, static_cast<double>(f.t) * 1e-6);
    f.flags.fill(VisibilityFlag::Original);
    for (int j = 0; j < kNumJoints; ++j) {
      for (View v : {View::Left, View::Right}) {
        const auto p = try_project(f.pose.joints[j], rig.view(v));
        if (!p || !rig.view(v).contains(p->pixel)) {
          char msg[160];
          std::snprintf(msg, sizeof msg, "joint %d leaves the %s camera's view at t=%llu us", j,
                        v == View::Left ? "left" : "right", static_cast<unsigned long long>(f.t));
          throw Error(ErrorCode::OutOfFrustum, msg, static_cast<std::size_t>(j));
        }
      }
    }
    track.frames.push_back(std::move(f));
  }
  return track;
}

namespace {

struct EventRecord {
  Microseconds t;
  std::uint32_t source;  // joint, or kNumJoints for noise
  std::uint32_t index;
  std::uint16_t x, y;
  std::int8_t p;
};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

}  // namespace

EventStream render_view_events(const MotionSpec& spec, const CameraModel& cam, const EventRenderOptions& options,
                               std::uint64_t stream_id) {
  spec.validate();
  if (!(options.contrast_step > 0.0)) throw Error(ErrorCode::InvalidArgument, "contrast_step must be positive");
  if (!(options.noise_rate >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_rate must be >= 0");
  if (options.substep == 0) throw Error(ErrorCode::InvalidArgument, "substep must be positive");

  const int W = cam.width();
  const int H = cam.height();
  std::vector<EventRecord> records;

  std::vector<Microseconds> times;
  for (Microseconds t = 0;; t += options.substep) {
    times.push_back(std::min(t, spec.duration));
    if (t >= spec.duration) break;
  }

  for (int j = 0; j < kNumJoints; ++j) {
    std::uint32_t index = 0;
    double carried = 0.0;
    std::optional<Vec2> prev;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const auto proj = try_project(joint_at(spec, j, static_cast<double>(times[k]) * 1e-6), cam);
      if (!proj) {
        prev.reset();
        carried = 0.0;
        continue;
      }
      const Vec2 cur = proj->pixel;
      if (prev) {
        const Vec2 seg = cur - *prev;
        const double len = seg.norm();
        const std::int8_t polarity = seg.x() > 0.0 ? 1 : -1;
        double s = 0.0;
        while (carried + (len - s) >= options.contrast_step) {
          s += options.contrast_step - carried;
          carried = 0.0;
          const double frac = s / len;
          const Vec2 at = *prev + frac * seg;
          const double t = static_cast<double>(times[k - 1]) + frac * static_cast<double>(times[k] - times[k - 1]);
          const double rx = std::round(at.x());
          const double ry = std::round(at.y());
          const std::uint32_t idx = index++;
          if (rx < 0.0 || ry < 0.0 || rx > W - 1 || ry > H - 1) continue;
          records.push_back({static_cast<Microseconds>(std::floor(t)), static_cast<std::uint32_t>(j), idx,
                             static_cast<std::uint16_t>(rx), static_cast<std::uint16_t>(ry), polarity});
        }
        carried += len - s;
      }
      prev = cur;
    }
  }

  if (options.noise_rate > 0.0) {
    auto rng = make_rng(options.seed, stream_id, 0x4e4f495345ULL);
    const double mean = options.noise_rate * static_cast<double>(spec.duration) * 1e-6 * W * H;
    std::poisson_distribution<std::uint64_t> count_dist(mean);
    const std::uint64_t count = count_dist(rng);
    std::uniform_int_distribution<Microseconds> t_dist(0, spec.duration);
    std::uniform_int_distribution<int> x_dist(0, W - 1);
    std::uniform_int_distribution<int> y_dist(0, H - 1);
    std::bernoulli_distribution p_dist(0.5);
    records.reserve(records.size() + count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const Microseconds t = t_dist(rng);
      const auto x = static_cast<std::uint16_t>(x_dist(rng));
      const auto y = static_cast<std::uint16_t>(y_dist(rng));
      const std::int8_t p = p_dist(rng) ? 1 : -1;
      records.push_back({t, static_cast<std::uint32_t>(kNumJoints), static_cast<std::uint32_t>(i), x, y, p});
    }
  }

  std::sort(records.begin(), records.end(), [](const EventRecord& a, const EventRecord& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.source != b.source) return a.source < b.source;
    return a.index < b.index;
  });

  EventStream stream(static_cast<std::uint16_t>(W), static_cast<std::uint16_t>(H));
  stream.reserve(records.size());
  for (const auto& r : records) stream.push_back({r.t, r.x, r.y, static_cast<Polarity>(r.p)});
  return stream;
}

StereoEvents render_events(const MotionSpec& spec, const StereoRig& rig, const EventRenderOptions& options) {
  StereoEvents out;
  if (options.threads >= 2) {
    std::exception_ptr failure;
    {
      std::jthread worker([&] {
        try {
          out.right = render_view_events(spec, rig.right(), options, 1);
        } catch (...) {
          failure = std::current_exception();
        }
      });
      out.left = render_view_events(spec, rig.left(), options, 0);
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    out.left = render_view_events(spec, rig.left(), options, 0);
    out.right = render_view_events(spec, rig.right(), options, 1);
  }
  return out;
}

DepthMap render_depth(const HandPose3D& pose, const CameraModel& cam, const DepthRenderOptions& options,
                      std::uint32_t frame_id) {
  if (options.splat_radius < 0) throw Error(ErrorCode::InvalidArgument, "splat radius must be >= 0");
  if (!(options.hole_fraction >= 0.0 && options.hole_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "hole fraction must lie in [0, 1]");
  }
  DepthMap map(cam.width(), cam.height());
  map.frame_id = frame_id;
  const double r = options.splat_radius;
  for (int j = 0; j < kNumJoints; ++j) {
    if (!pose.valid[j]) continue;
    const auto proj = try_project(pose.joints[j], cam);
    if (!proj) continue;
    const Vec2 u = proj->pixel;
    const int x0 = std::max(0, static_cast<int>(std::floor(u.x() - r)));
    const int x1 = std::min(map.width - 1, static_cast<int>(std::ceil(u.x() + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(u.y() - r)));
    const int y1 = std::min(map.height - 1, static_cast<int>(std::ceil(u.y() + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - u.x();
        const double dy = y - u.y();
        if (dx * dx + dy * dy > r * r) continue;
        double& d = map.at(x, y);
        if (d == 0.0 || proj->depth < d) d = proj->depth;
      }
    }
  }
  if (options.hole_fraction > 0.0) {
    auto rng = make_rng(options.seed, frame_id, 0x484f4c45ULL);
    std::bernoulli_distribution hole(options.hole_fraction);
    for (double& v : map.values) {
      if (hole(rng)) v = 0.0;
    }
  }
  return map;
}

StereoRig default_rig() {
  const Distortion dist{-0.02, 0.005, 1e-4, 1e-4, 0.0};
  CameraModel left(800, 800, 640, 360, dist, Mat3::Identity(), Vec3::Zero(), 1280, 720);
  CameraModel right(800, 800, 640, 360, dist, Mat3::Identity(), Vec3(-64, 0, 0), 1280, 720);
  return {left, right};
}

CameraModel default_depth_camera() {
  return {260, 260, 160, 120, Distortion{}, Mat3::Identity(), Vec3(-32, 30, 0), 320, 240};
}

const char* to_string(Lighting lighting) { return lighting == Lighting::Low ? "low-light" : "normal-light"; }
const char* to_string(HandMode mode) { return mode == HandMode::Single ? "single" : "bimanual"; }

Lighting lighting_from_string(const std::string& name) {
  if (name == "normal" || name == "normal-light") return Lighting::Normal;
  if (name == "low" || name == "low-light") return Lighting::Low;
  throw Error(ErrorCode::InvalidArgument, "unknown lighting tier '" + name + "' (expected normal or low)");
}

HandMode hand_mode_from_string(const std::string& name) {
  if (name == "single") return HandMode::Single;
  if (name == "bimanual") return HandMode::Bimanual;
  throw Error(ErrorCode::InvalidArgument, "unknown hand mode '" + name + "' (expected single or bimanual)");
}

double default_noise_rate(Lighting lighting) { return lighting == Lighting::Low ? 5e-3 : 1e-3; }

std::vector<std::string> SceneConfig::tags() const { return {to_string(lighting), to_string(hands)}; }

namespace {

// Right-hand skeleton relative to the wrist, mm. Fingers point towards -y.
constexpr double kSkeleton[kJointsPerHand][3] = {
    {0, 0, 0},                                                               // wrist
    {-25, -15, -5},  {-40, -35, -10},  {-50, -55, -12},  {-58, -72, -14},   // thumb
    {-20, -80, 0},   {-22, -115, 0},   {-23, -135, 0},   {-24, -152, 0},    // index
    {0, -85, 0},     {0, -123, 0},     {0, -146, 0},     {0, -165, 0},      // middle
    {18, -80, 0},    {20, -113, 0},    {21, -133, 0},    {22, -150, 0},     // ring
    {34, -70, 0},    {38, -96, 0},     {40, -112, 0},    {42, -126, 0},     // pinky
};

const Vec3 kWristPosition[2] = {Vec3(-90, 80, 420), Vec3(110, 80, 400)};

}  // namespace

MotionSpec make_motion(const SceneConfig& config) {
  if (!(config.duration_s > 0.0) || !std::isfinite(config.duration_s)) {
    throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  }
  MotionSpec spec;
  spec.duration = static_cast<Microseconds>(std::llround(config.duration_s * 1e6));
  spec.frame_rate = config.frame_rate;
  spec.seed = config.seed;

  auto rng = make_rng(config.seed, 0, 0x4d4f54494f4eULL);
  std::uniform_real_distribution<double> amp(5.0, 15.0);
  std::uniform_real_distribution<double> freq(0.5, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int hand = 0; hand < 2; ++hand) {
    const double mirror = hand == 0 ? -1.0 : 1.0;
    const bool still = hand == 0 && config.hands == HandMode::Single;
    for (int j = 0; j < kJointsPerHand; ++j) {
      spec.base[hand * kJointsPerHand + j] =
          kWristPosition[hand] + Vec3(mirror * kSkeleton[j][0], kSkeleton[j][1], kSkeleton[j][2]);
    }
    for (int finger = 0; finger < 5; ++finger) {
      // Flexion curls the finger towards the palm and the cameras; joints
      // further along the chain travel further.
      const Vec3 dir = finger == 0 ? Vec3(0.6 * mirror, 0.3, -0.74).normalized() : Vec3(0, 0.45, -0.89).normalized();
      const double a = amp(rng);
      const double f = freq(rng);
      const double ph = phase(rng);
      for (int m = 1; m <= 4; ++m) {
        auto& osc = spec.articulation[hand * kJointsPerHand + 4 * finger + m];
        osc.amplitude = still ? Vec3::Zero() : Vec3(dir * (a * m / 4.0));
        osc.frequency_hz = still ? 0.0 : f;
        osc.phase = ph;
      }
    }
    Vec3 drift(gauss(rng), gauss(rng), gauss(rng));
    if (!(drift.norm() > 1e-9)) drift = Vec3::UnitX();
    auto& tr = spec.translation[hand];
    tr.amplitude = still ? Vec3::Zero() : Vec3(20.0 * drift.normalized());
    tr.frequency_hz = still ? 0.0 : 0.3;
    tr.phase = phase(rng);
  }
  return spec;
}

SimOutput simulate(const SceneConfig& config, unsigned threads) {
  const MotionSpec spec = make_motion(config);
  const StereoRig rig = default_rig();
  const CameraModel depth_cam = default_depth_camera();
  HandPoseTrack track = synth_trajectory(spec, rig);
  auto views = project_annotations(track, rig);

  std::vector<DepthKeypointFrame> keypoints;
  std::vector<DepthMap> depth;
  keypoints.reserve(track.frames.size());
  depth.reserve(track.frames.size());
  const DepthRenderOptions depth_opts{3, config.depth_hole_fraction, config.seed};
  for (std::size_t k = 0; k < track.frames.size(); ++k) {
    const auto& f = track.frames[k];
    DepthKeypointFrame kf;
    kf.frame_id = f.frame_id;
    kf.t = f.t;
    char name[40];
    std::snprintf(name, sizeof name, "depth/%06zu.dpm", k);
    kf.depth_file = name;
    const auto view = project_view(f.pose, f.flags, depth_cam);
    for (int j = 0; j < kNumJoints; ++j) {
      kf.keypoints[j] = view.flags[j] == ViewFlag::Visible ? view.coords[j] : Vec2::Constant(std::nan(""));
    }
    keypoints.push_back(std::move(kf));
    depth.push_back(render_depth(f.pose, depth_cam, depth_opts, static_cast<std::uint32_t>(f.frame_id)));
  }

  EventRenderOptions ev;
  ev.contrast_step = config.contrast_step;
  ev.noise_rate = config.resolved_noise_rate();
  ev.seed = config.seed;
  ev.threads = threads;
  StereoEvents events = render_events(spec, rig, ev);

  return SimOutput{config,        spec,          rig, depth_cam, std::move(track), std::move(views),
                   std::move(keypoints), std::move(depth), std::move(events)};
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

nlohmann::json oscillation_json(const Oscillation& o) {
  return {{"amplitude_mm", vec_json(o.amplitude)}, {"frequency_hz", o.frequency_hz}, {"phase_rad", o.phase}};
}

}  // namespace

std::vector<ExportedFile> export_dataset(const SimOutput& sim, const std::string& directory) {
  namespace fs = std::filesystem;
  std::vector<ExportedFile> files;
  auto record = [&](const std::string& role, const std::string& rel) {
    files.push_back({role, rel, static_cast<std::uint64_t>(fs::file_size(fs::path(directory) / rel))});
  };
  auto path = [&](const std::string& rel) { return (fs::path(directory) / rel).string(); };

  write_event_file(path("events_left.evs"), sim.events.left, EventFormat::BinaryV1);
  record("events_left", "events_left.evs");
  write_event_file(path("events_right.evs"), sim.events.right, EventFormat::BinaryV1);
  record("events_right", "events_right.evs");

  write_calibration_file(path("calibration.json"), Calibration{sim.rig, sim.depth_camera});
  record("calibration", "calibration.json");

  Annotation gt;
  gt.metadata.scenario = sim.config.tags();
  gt.metadata.label = sim.config.label;
  gt.metadata.extra["source"] = "simulator";
  gt.track = sim.track;
  gt.views = sim.views;
  write_annotation_file(path("gt_annotation.json"), gt);
  record("ground_truth", "gt_annotation.json");

  io::write_text_file(path("kp2d.json"), write_kp2d(sim.depth_keypoints));
  record("depth_keypoints", "kp2d.json");
  for (std::size_t k = 0; k < sim.depth.size(); ++k) {
    write_depth_file(path(sim.depth_keypoints[k].depth_file), sim.depth[k]);
    record("depth_map", sim.depth_keypoints[k].depth_file);
  }

  nlohmann::json spec;
  spec["duration_us"] = sim.spec.duration;
  spec["frame_rate_hz"] = sim.spec.frame_rate;
  spec["seed"] = sim.spec.seed;
  spec["base_mm"] = nlohmann::json::array();
  spec["articulation"] = nlohmann::json::array();
  for (int j = 0; j < kNumJoints; ++j) {
    spec["base_mm"].push_back(vec_json(sim.spec.base[j]));
    spec["articulation"].push_back(oscillation_json(sim.spec.articulation[j]));
  }
  spec["translation"] = {oscillation_json(sim.spec.translation[0]), oscillation_json(sim.spec.translation[1])};

  nlohmann::json manifest;
  manifest["format"] = "egohand-manifest-v1";
  manifest["seed"] = sim.config.seed;
  manifest["scenario"] = sim.config.tags();
  if (sim.config.label) manifest["label"] = *sim.config.label;
  manifest["frames"] = sim.track.frames.size();
  manifest["events"] = {{"left", sim.events.left.size()}, {"right", sim.events.right.size()}};
  manifest["render"] = {{"contrast_step_px", sim.config.contrast_step},
                        {"noise_rate_per_px_s", sim.config.resolved_noise_rate()},
                        {"depth_hole_fraction", sim.config.depth_hole_fraction},
                        {"depth_splat_radius_px", 3}};
  manifest["spec"] = spec;
  manifest["files"] = nlohmann::json::array();
  for (const auto& f : files) manifest["files"].push_back({{"role", f.role}, {"path", f.path}, {"bytes", f.bytes}});
  io::write_text_file(path("manifest.json"), manifest.dump(1) + "\n");
  return files;
}

}  // namespace egohand
