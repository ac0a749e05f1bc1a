#pragma once
// Calibration documents (JSON). One document per rig:
//
//   {
//     "format": "egohand-calibration-v1",
//     "left":  <camera>, "right": <camera>, "depth": <camera>   (depth optional)
//   }
//   <camera> = { "width", "height", "fx", "fy", "cx", "cy",
//                "dist": [k1, k2, p1, p2, k3], "R": [9, row-major], "T": [3, mm] }
//
// Every camera field is required; a missing one raises MissingField.

#include <optional>
#include <string>

#include "egohand/camera.hpp"

namespace egohand {

struct Calibration {
  StereoRig rig;
  std::optional<CameraModel> depth;
};

std::string write_calibration(const Calibration& calib);
Calibration parse_calibration(const std::string& text);

Calibration read_calibration_file(const std::string& path);
void write_calibration_file(const std::string& path, const Calibration& calib);

}  // namespace egohand
