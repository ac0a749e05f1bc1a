#include "egohand/gesture_features.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace egohand {

StereoPose2D StereoPose2D::all_valid(const Keypoints2D& left, const Keypoints2D& right) {
  StereoPose2D p;
  p.view[0] = left;
  p.view[1] = right;
  p.valid[0].fill(true);
  p.valid[1].fill(true);
  return p;
}

StereoPose2D make_stereo_pose(std::span<const Vec2> left, std::span<const Vec2> right) {
  if (left.size() != kNumJoints || right.size() != kNumJoints) {
    throw Error(ErrorCode::JointCountMismatch, "stereo pose needs 42 joints per view, got " +
                                                   std::to_string(left.size()) + " and " +
                                                   std::to_string(right.size()));
  }
  Keypoints2D l, r;
  std::copy(left.begin(), left.end(), l.begin());
  std::copy(right.begin(), right.end(), r.begin());
  return StereoPose2D::all_valid(l, r);
}

HandKeypoints2D wrist_center(const HandKeypoints2D& hand) {
  HandKeypoints2D out;
  for (int j = 0; j < kJointsPerHand; ++j) out[j] = hand[j] - hand[kWristJoint];
  return out;
}

HandKeypoints2D scale_normalize(const HandKeypoints2D& centered) {
  const double denom = centered[kMiddleMcpJoint].norm() + kPalmEpsilon;
  HandKeypoints2D out;
  for (int j = 0; j < kJointsPerHand; ++j) out[j] = centered[j] / denom;
  return out;
}

namespace {

HandKeypoints2D extract_hand(const StereoPose2D& pose, int view, int hand) {
  HandKeypoints2D h;
  const int base = hand * kJointsPerHand;
  if (!pose.valid[view][base + kWristJoint] || !pose.view[view][base + kWristJoint].allFinite()) {
    throw Error(ErrorCode::MissingWrist, std::string(view == 0 ? "left" : "right") + " view, " +
                                             (hand == 0 ? "left" : "right") + " hand: wrist is invalid",
                static_cast<std::size_t>(2 * view + hand));
  }
  for (int j = 0; j < kJointsPerHand; ++j) {
    h[j] = pose.valid[view][base + j] ? pose.view[view][base + j] : pose.view[view][base + kWristJoint];
  }
  return h;
}

template <typename Fn>
StereoPose2D per_hand(const StereoPose2D& pose, Fn&& fn) {
  StereoPose2D out = pose;
  for (int v = 0; v < 2; ++v) {
    for (int hand = 0; hand < 2; ++hand) {
      const auto h = fn(extract_hand(pose, v, hand));
      for (int j = 0; j < kJointsPerHand; ++j) {
        const int idx = hand * kJointsPerHand + j;
        out.view[v][idx] = pose.valid[v][idx] ? h[j] : Vec2::Zero();
      }
    }
  }
  return out;
}

}  // namespace

StereoPose2D wrist_center(const StereoPose2D& pose) {
  return per_hand(pose, [](const HandKeypoints2D& h) { return wrist_center(h); });
}

StereoPose2D scale_normalize(const StereoPose2D& centered) {
  return per_hand(centered, [](const HandKeypoints2D& h) { return scale_normalize(h); });
}

FeatureVector frame_features(const StereoPose2D& pose) {
  const StereoPose2D n = scale_normalize(wrist_center(pose));
  FeatureVector out{};
  std::size_t k = 0;
  for (int v = 0; v < 2; ++v) {
    for (int j = 0; j < kNumJoints; ++j) {
      const Vec2 p = n.valid[v][j] ? n.view[v][j] : Vec2::Zero();
      out[k++] = p.x();
      out[k++] = p.y();
    }
  }
  return out;
}

FeatureVector GestureSequence::time_average() const {
  FeatureVector avg{};
  if (frames.empty()) return avg;
  for (const auto& f : frames) {
    for (int i = 0; i < kFeatureDim; ++i) avg[i] += f.vector[i];
  }
  for (double& v : avg) v /= static_cast<double>(frames.size());
  return avg;
}

GestureSequence build_sequence(std::span<const StereoPose2D> poses, std::span<const Microseconds> timestamps,
                               std::optional<int> label) {
  if (poses.empty()) throw Error(ErrorCode::InvalidArgument, "a sequence needs at least one frame");
  if (poses.size() != timestamps.size()) throw Error(ErrorCode::InvalidArgument, "one timestamp per frame required");
  if (label && (*label < 0 || *label >= 38)) {
    throw Error(ErrorCode::LabelOutOfRange, "gesture label " + std::to_string(*label) + " outside [0, 38)");
  }
  GestureSequence seq;
  seq.label = label;
  seq.frames.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (i > 0 && timestamps[i] <= timestamps[i - 1]) {
      throw Error(ErrorCode::InvalidArgument, "frame timestamps must increase", i);
    }
    seq.frames.push_back({frame_features(poses[i]), timestamps[i]});
  }
  return seq;
}

std::string sequence_to_text(const GestureSequence& seq) {
  std::string out;
  out.reserve(seq.frames.size() * kFeatureDim * 24);
  char buf[40];
  for (const auto& f : seq.frames) {
    out += std::to_string(f.t);
    for (double v : f.vector) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  if (seq.label) out += "label," + std::to_string(*seq.label) + "\n";
  return out;
}

GestureSequence parse_sequence(const std::string& text) {
  GestureSequence seq;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("label,", 0) == 0) {
      seq.label = std::stoi(line.substr(6));
      continue;
    }
    if (seq.label) throw Error(ErrorCode::InvalidRecord, "rows after the label line", row);
    NormalizedFrame f;
    std::size_t field = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t end = line.find(',', pos);
      if (end == std::string::npos) end = line.size();
      const char* b = line.data() + pos;
      const char* e = line.data() + end;
      std::from_chars_result r{};
      if (field == 0) {
        r = std::from_chars(b, e, f.t);
      } else if (field <= static_cast<std::size_t>(kFeatureDim)) {
        r = std::from_chars(b, e, f.vector[field - 1]);
      } else {
        throw Error(ErrorCode::InvalidRecord, "too many fields", row);
      }
      if (r.ec != std::errc() || r.ptr != e) throw Error(ErrorCode::InvalidRecord, "unparsable field", row);
      ++field;
      pos = end + 1;
    }
    if (field != static_cast<std::size_t>(kFeatureDim) + 1) {
      throw Error(ErrorCode::InvalidRecord, "expected t_us plus 168 values", row);
    }
    seq.frames.push_back(f);
    ++row;
  }
  if (seq.frames.empty()) throw Error(ErrorCode::InvalidRecord, "sequence holds no frames");
  if (seq.label && (*seq.label < 0 || *seq.label >= 38)) {
    throw Error(ErrorCode::LabelOutOfRange, "gesture label outside [0, 38)");
  }
  return seq;
}

namespace {

double squared_distance(const FeatureVector& a, const FeatureVector& b) {
  double s = 0.0;
  for (int i = 0; i < kFeatureDim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

void CentroidClassifier::fit(std::span<const GestureSequence> sequences) {
  if (sequences.empty()) throw Error(ErrorCode::InvalidArgument, "no training sequences");
  std::map<int, std::pair<FeatureVector, std::size_t>> acc;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (!sequences[i].label) throw Error(ErrorCode::InvalidArgument, "training sequence without a label", i);
    auto& [sum, count] = acc[*sequences[i].label];
    const auto avg = sequences[i].time_average();
    for (int k = 0; k < kFeatureDim; ++k) sum[k] += avg[k];
    ++count;
  }
  labels_.clear();
  centroids_.clear();
  for (auto& [label, entry] : acc) {
    for (double& v : entry.first) v /= static_cast<double>(entry.second);
    labels_.push_back(label);
    centroids_.push_back(entry.first);
  }
}

int CentroidClassifier::predict(const GestureSequence& seq) const {
  if (centroids_.empty()) throw Error(ErrorCode::InvalidArgument, "classifier has not been fitted");
  const auto avg = seq.time_average();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids_.size(); ++c) {
    const double d = squared_distance(avg, centroids_[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return labels_[best];
}

double CentroidClassifier::leave_one_out_accuracy(std::span<const GestureSequence> sequences) {
  if (sequences.size() < 2) throw Error(ErrorCode::InvalidArgument, "leave-one-out needs two or more sequences");
  std::size_t correct = 0;
  std::vector<GestureSequence> train;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    train.clear();
    for (std::size_t k = 0; k < sequences.size(); ++k) {
      if (k != i) train.push_back(sequences[k]);
    }
    CentroidClassifier clf;
    clf.fit(train);
    if (sequences[i].label && clf.predict(sequences[i]) == *sequences[i].label) ++correct;
  }
  return static_cast<double>(correct) / sequences.size();
}

}  // namespace egohand
