#include "egohand/annotation.hpp"

#include <cmath>
#include <limits>

#include <json.hpp>

#include "binary_io.hpp"

namespace egohand {

namespace {
const double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void HandPoseTrack::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i > 0 && frames[i].t <= frames[i - 1].t) {
      throw Error(ErrorCode::InvalidArgument, "track timestamps must strictly increase", i);
    }
    for (int j = 0; j < kNumJoints; ++j) {
      if ((frames[i].flags[j] == VisibilityFlag::Invalid) == frames[i].pose.valid[j]) {
        throw Error(ErrorCode::InvalidArgument, "flag disagrees with joint validity", i);
      }
    }
  }
}

std::optional<double> fill_depth(const DepthMap& depth, const Vec2& u, int window) {
  if (window < 1 || window % 2 == 0) throw Error(ErrorCode::InvalidArgument, "window must be odd and >= 1");
  if (!u.allFinite()) return std::nullopt;
  const double rx = std::round(u.x());
  const double ry = std::round(u.y());
  if (std::abs(rx) > 1e9 || std::abs(ry) > 1e9) return std::nullopt;
  const int cx = static_cast<int>(rx);
  const int cy = static_cast<int>(ry);
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < depth.width && y < depth.height; };
  if (inside(cx, cy) && depth.at(cx, cy) > 0.0) return depth.at(cx, cy);

  const int half = window / 2;
  double sum = 0.0;
  int count = 0;
  for (int y = cy - half; y <= cy + half; ++y) {
    for (int x = cx - half; x <= cx + half; ++x) {
      if (!inside(x, y)) continue;
      const double d = depth.at(x, y);
      if (d > 0.0) {
        sum += d;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

LiftedPose lift_keypoints(const Keypoints2D& keypoints, const DepthMap& depth, const CameraModel& cam, int window) {
  LiftedPose out;
  out.pose = HandPose3D::all_invalid();
  out.flags.fill(VisibilityFlag::Invalid);
  for (int j = 0; j < kNumJoints; ++j) {
    const auto d = fill_depth(depth, keypoints[j], window);
    if (!d) continue;
    try {
      out.pose.joints[j] = back_project(keypoints[j], *d, cam);
    } catch (const Error&) {
      continue;
    }
    out.pose.valid[j] = true;
    out.flags[j] = VisibilityFlag::Original;
  }
  return out;
}

HandPoseTrack interpolate_track(const HandPoseTrack& track, int max_gap) {
  if (max_gap < 0) throw Error(ErrorCode::InvalidArgument, "max_gap must be >= 0");
  for (std::size_t i = 1; i < track.frames.size(); ++i) {
    if (track.frames[i].t <= track.frames[i - 1].t) {
      throw Error(ErrorCode::InvalidArgument, "track timestamps must strictly increase", i);
    }
  }
  HandPoseTrack out = track;
  const std::size_t n = out.frames.size();
  for (int j = 0; j < kNumJoints; ++j) {
    std::size_t i = 0;
    while (i < n) {
      if (out.frames[i].flags[j] != VisibilityFlag::Invalid) {
        ++i;
        continue;
      }
      std::size_t end = i;
      while (end < n && out.frames[end].flags[j] == VisibilityFlag::Invalid) ++end;
      const std::size_t run = end - i;
      const bool anchored = i > 0 && end < n;
      if (anchored && run <= static_cast<std::size_t>(max_gap)) {
        const TrackFrame& a = out.frames[i - 1];
        const TrackFrame& b = out.frames[end];
        const double span = static_cast<double>(b.t - a.t);
        for (std::size_t k = i; k < end; ++k) {
          const double s = static_cast<double>(out.frames[k].t - a.t) / span;
          out.frames[k].pose.joints[j] = a.pose.joints[j] + s * (b.pose.joints[j] - a.pose.joints[j]);
          out.frames[k].pose.valid[j] = true;
          out.frames[k].flags[j] = VisibilityFlag::Interpolated;
        }
      }
      i = end;
    }
  }
  return out;
}

ViewAnnotation project_view(const HandPose3D& pose, const JointFlags& flags, const CameraModel& cam) {
  ViewAnnotation v;
  for (int j = 0; j < kNumJoints; ++j) {
    v.coords[j] = Vec2::Constant(kNaN);
    v.flags[j] = ViewFlag::Absent;
    if (flags[j] == VisibilityFlag::Invalid || !pose.valid[j]) continue;
    const auto p = try_project(pose.joints[j], cam);
    if (!p) {
      v.flags[j] = ViewFlag::BehindCamera;
      continue;
    }
    v.coords[j] = p->pixel;
    v.flags[j] = cam.contains(p->pixel) ? ViewFlag::Visible : ViewFlag::OutOfImage;
  }
  return v;
}

StereoAnnotation project_frame(const TrackFrame& frame, const StereoRig& rig) {
  return {project_view(frame.pose, frame.flags, rig.left()), project_view(frame.pose, frame.flags, rig.right())};
}

std::vector<StereoAnnotation> project_annotations(const HandPoseTrack& track, const StereoRig& rig) {
  std::vector<StereoAnnotation> out;
  out.reserve(track.frames.size());
  for (const auto& f : track.frames) out.push_back(project_frame(f, rig));
  return out;
}

namespace {

using nlohmann::json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& v) { return v.is_null() ? kNaN : v.get<double>(); }

json view_to_json(const ViewAnnotation& v) {
  json arr = json::array();
  for (int j = 0; j < kNumJoints; ++j) {
    arr.push_back({number_or_null(v.coords[j].x()), number_or_null(v.coords[j].y()),
                   std::string(1, static_cast<char>(v.flags[j]))});
  }
  return arr;
}

ViewAnnotation view_from_json(const json& arr, std::size_t frame) {
  if (!arr.is_array() || arr.size() != kNumJoints) {
    throw Error(ErrorCode::JointCountMismatch, "view block must hold 42 entries", frame);
  }
  ViewAnnotation v;
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& e = arr[j];
    if (!e.is_array() || e.size() != 3) throw Error(ErrorCode::InvalidRecord, "view entry must be [u, v, flag]", frame);
    const auto flag = e[2].get<std::string>();
    if (flag != "V" && flag != "O" && flag != "B" && flag != "X") {
      throw Error(ErrorCode::InvalidRecord, "unknown view flag '" + flag + "'", frame);
    }
    v.flags[j] = static_cast<ViewFlag>(flag[0]);
    v.coords[j] = Vec2(number_from(e[0]), number_from(e[1]));
  }
  return v;
}

}  // namespace

std::string write_annotation(const Annotation& a) {
  if (!a.views.empty() && a.views.size() != a.track.frames.size()) {
    throw Error(ErrorCode::ShapeMismatch, "view blocks must match frame count");
  }
  json meta = json::object();
  meta["scenario"] = a.metadata.scenario;
  if (a.metadata.label) meta["label"] = *a.metadata.label;
  for (const auto& [k, v] : a.metadata.extra) meta[k] = v;

  json frames = json::array();
  for (std::size_t i = 0; i < a.track.frames.size(); ++i) {
    const auto& f = a.track.frames[i];
    json joints = json::array();
    for (int j = 0; j < kNumJoints; ++j) {
      const bool valid = f.flags[j] != VisibilityFlag::Invalid;
      const Vec3& p = f.pose.joints[j];
      joints.push_back({valid ? number_or_null(p.x()) : json(nullptr), valid ? number_or_null(p.y()) : json(nullptr),
                        valid ? number_or_null(p.z()) : json(nullptr), std::string(1, static_cast<char>(f.flags[j]))});
    }
    json frame{{"frame_id", f.frame_id}, {"t_us", f.t}, {"joints", joints}};
    if (!a.views.empty()) frame["views"] = {{"L", view_to_json(a.views[i].left)}, {"R", view_to_json(a.views[i].right)}};
    frames.push_back(std::move(frame));
  }
  json doc{{"format", "egohand-annotation-v1"}, {"metadata", meta}, {"frames", frames}};
  return doc.dump(1) + "\n";
}

Annotation parse_annotation(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("annotation is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("frames")) throw Error(ErrorCode::MissingField, "annotation.frames");
  Annotation a;
  try {
    if (doc.contains("metadata")) {
      for (const auto& [k, v] : doc["metadata"].items()) {
        if (k == "scenario") {
          a.metadata.scenario = v.get<std::vector<std::string>>();
        } else if (k == "label") {
          a.metadata.label = v.get<int>();
        } else {
          a.metadata.extra[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
      }
    }
    bool any_views = false;
    bool all_views = true;
    std::vector<StereoAnnotation> views;
    std::size_t index = 0;
    for (const auto& fj : doc["frames"]) {
      TrackFrame f;
      if (!fj.contains("frame_id") || !fj.contains("t_us") || !fj.contains("joints")) {
        throw Error(ErrorCode::MissingField, "frame needs frame_id, t_us and joints", index);
      }
      f.frame_id = fj["frame_id"].get<std::int64_t>();
      f.t = fj["t_us"].get<Microseconds>();
      const auto& joints = fj["joints"];
      if (!joints.is_array() || joints.size() != kNumJoints) {
        throw Error(ErrorCode::JointCountMismatch, "frame must hold 42 joints", index);
      }
      for (int j = 0; j < kNumJoints; ++j) {
        const auto& e = joints[j];
        if (!e.is_array() || e.size() != 4) throw Error(ErrorCode::InvalidRecord, "joint must be [X, Y, Z, flag]", index);
        const auto flag = e[3].get<std::string>();
        if (flag != "O" && flag != "I" && flag != "X") {
          throw Error(ErrorCode::InvalidRecord, "unknown joint flag '" + flag + "'", index);
        }
        f.flags[j] = static_cast<VisibilityFlag>(flag[0]);
        f.pose.joints[j] = Vec3(number_from(e[0]), number_from(e[1]), number_from(e[2]));
        f.pose.valid[j] = f.flags[j] != VisibilityFlag::Invalid;
        if (f.pose.valid[j] && !f.pose.joints[j].allFinite()) {
          throw Error(ErrorCode::InvalidRecord, "valid joint with missing coordinates", index);
        }
        if (!f.pose.valid[j]) f.pose.joints[j] = Vec3::Constant(kNaN);
      }
      if (fj.contains("views")) {
        any_views = true;
        const auto& vj = fj["views"];
        if (!vj.contains("L") || !vj.contains("R")) throw Error(ErrorCode::MissingField, "views need L and R", index);
        views.push_back({view_from_json(vj["L"], index), view_from_json(vj["R"], index)});
      } else {
        all_views = false;
      }
      a.track.frames.push_back(std::move(f));
      ++index;
    }
    if (any_views && !all_views) throw Error(ErrorCode::MissingField, "views present on some frames only");
    a.views = std::move(views);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidRecord, std::string("annotation field has the wrong type: ") + e.what());
  }
  a.track.validate();
  return a;
}

Annotation read_annotation_file(const std::string& path) { return parse_annotation(io::read_text_file(path)); }

void write_annotation_file(const std::string& path, const Annotation& annotation) {
  io::write_text_file(path, write_annotation(annotation));
}

std::string write_kp2d(const std::vector<DepthKeypointFrame>& frames) {
  json arr = json::array();
  for (const auto& f : frames) {
    json kp = json::array();
    for (const auto& u : f.keypoints) kp.push_back(u.allFinite() ? json{u.x(), u.y()} : json(nullptr));
    arr.push_back({{"frame_id", f.frame_id}, {"t_us", f.t}, {"depth", f.depth_file}, {"keypoints", kp}});
  }
  return json{{"format", "egohand-kp2d-v1"}, {"frames", arr}}.dump(1) + "\n";
}

std::vector<DepthKeypointFrame> parse_kp2d(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("kp2d file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("frames")) throw Error(ErrorCode::MissingField, "kp2d.frames");
  std::vector<DepthKeypointFrame> out;
  std::size_t index = 0;
  try {
    for (const auto& fj : doc["frames"]) {
      for (const char* key : {"frame_id", "t_us", "depth", "keypoints"}) {
        if (!fj.contains(key)) throw Error(ErrorCode::MissingField, std::string("kp2d frame field ") + key, index);
      }
      DepthKeypointFrame f;
      f.frame_id = fj["frame_id"].get<std::int64_t>();
      f.t = fj["t_us"].get<Microseconds>();
      f.depth_file = fj["depth"].get<std::string>();
      const auto& kp = fj["keypoints"];
      if (!kp.is_array() || kp.size() != kNumJoints) {
        throw Error(ErrorCode::JointCountMismatch, "kp2d frame must hold 42 keypoints", index);
      }
      for (int j = 0; j < kNumJoints; ++j) {
        if (kp[j].is_null()) {
          f.keypoints[j] = Vec2::Constant(kNaN);
        } else {
          if (!kp[j].is_array() || kp[j].size() != 2) throw Error(ErrorCode::InvalidRecord, "keypoint must be [u, v]", index);
          f.keypoints[j] = Vec2(kp[j][0].get<double>(), kp[j][1].get<double>());
        }
      }
      out.push_back(std::move(f));
      ++index;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidRecord, std::string("kp2d field has the wrong type: ") + e.what(), index);
  }
  return out;
}

std::vector<std::uint8_t> write_depth(const DepthMap& depth) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + depth.values.size() * 2);
  io::ByteWriter w(out);
  w.bytes("DPM1", 4);
  w.le(static_cast<std::uint16_t>(depth.width));
  w.le(static_cast<std::uint16_t>(depth.height));
  w.le(depth.frame_id);
  for (double v : depth.values) {
    const double mm = std::round(std::clamp(v, 0.0, 65535.0));
    w.le(static_cast<std::uint16_t>(mm));
  }
  return out;
}

DepthMap parse_depth(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  if (!in.magic("DPM1") || !in.has(8)) throw Error(ErrorCode::MalformedHeader, "not a DPM1 file");
  const int w = in.le<std::uint16_t>();
  const int h = in.le<std::uint16_t>();
  DepthMap d(w, h);
  d.frame_id = in.le<std::uint32_t>();
  if (in.remaining() != d.values.size() * 2) throw Error(ErrorCode::TruncatedRecord, "depth payload size mismatch");
  for (auto& v : d.values) v = in.le<std::uint16_t>();
  return d;
}

DepthMap read_depth_file(const std::string& path) { return parse_depth(io::read_file(path)); }

void write_depth_file(const std::string& path, const DepthMap& depth) { io::write_file(path, write_depth(depth)); }

}  // namespace egohand
