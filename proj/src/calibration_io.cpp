#include "egohand/calibration_io.hpp"

#include <json.hpp>

#include "egohand/file_io.hpp"

namespace egohand {
namespace {

using nlohmann::json;

json camera_to_json(const CameraModel& cam) {
  const auto& d = cam.distortion();
  json R = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R.push_back(cam.rotation()(r, c));
  const auto& T = cam.translation();
  return json{{"width", cam.width()},
              {"height", cam.height()},
              {"fx", cam.fx()},
              {"fy", cam.fy()},
              {"cx", cam.cx()},
              {"cy", cam.cy()},
              {"dist", {d.k1, d.k2, d.p1, d.p2, d.k3}},
              {"R", R},
              {"T", {T.x(), T.y(), T.z()}}};
}

const json& field(const json& obj, const char* name, const std::string& where) {
  if (!obj.is_object() || !obj.contains(name)) {
    throw Error(ErrorCode::MissingField, where + "." + name);
  }
  return obj.at(name);
}

std::vector<double> number_array(const json& obj, const char* name, std::size_t n, const std::string& where) {
  const auto& a = field(obj, name, where);
  if (!a.is_array() || a.size() != n) {
    throw Error(ErrorCode::InvalidRecord, where + "." + name + " must hold " + std::to_string(n) + " numbers");
  }
  std::vector<double> out;
  for (const auto& v : a) {
    if (!v.is_number()) throw Error(ErrorCode::InvalidRecord, where + "." + name + " must be numeric");
    out.push_back(v.get<double>());
  }
  return out;
}

double number(const json& obj, const char* name, const std::string& where) {
  const auto& v = field(obj, name, where);
  if (!v.is_number()) throw Error(ErrorCode::InvalidRecord, where + "." + name + " must be numeric");
  return v.get<double>();
}

CameraModel camera_from_json(const json& j, const std::string& where) {
  const auto dist = number_array(j, "dist", 5, where);
  const auto R = number_array(j, "R", 9, where);
  const auto T = number_array(j, "T", 3, where);
  Mat3 rot;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot(r, c) = R[r * 3 + c];
  return CameraModel(number(j, "fx", where), number(j, "fy", where), number(j, "cx", where), number(j, "cy", where),
                     Distortion{dist[0], dist[1], dist[2], dist[3], dist[4]}, rot, Vec3(T[0], T[1], T[2]),
                     static_cast<int>(number(j, "width", where)), static_cast<int>(number(j, "height", where)));
}

}  // namespace

std::string write_calibration(const Calibration& calib) {
  json doc{{"format", "egohand-calibration-v1"},
           {"left", camera_to_json(calib.rig.left())},
           {"right", camera_to_json(calib.rig.right())}};
  if (calib.depth) doc["depth"] = camera_to_json(*calib.depth);
  return doc.dump(2) + "\n";
}

Calibration parse_calibration(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("calibration is not valid JSON: ") + e.what());
  }
  Calibration calib{StereoRig(camera_from_json(field(doc, "left", "calibration"), "left"),
                              camera_from_json(field(doc, "right", "calibration"), "right")),
                    std::nullopt};
  if (doc.contains("depth")) calib.depth = camera_from_json(doc.at("depth"), "depth");
  return calib;
}

Calibration read_calibration_file(const std::string& path) { return parse_calibration(io::read_text_file(path)); }

void write_calibration_file(const std::string& path, const Calibration& calib) {
  io::write_text_file(path, write_calibration(calib));
}

}  // namespace egohand
