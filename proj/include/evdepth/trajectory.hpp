#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <string>
#include <vector>

#include "evdepth/events.hpp"
#include "evdepth/geometry.hpp"

namespace evdepth {

// Pose of the left camera in the world frame (world_from_cam).
struct PoseSample {
  Timestamp t = 0;
  SE3 pose;
};

class Trajectory {
 public:
  Trajectory() = default;

  explicit Trajectory(std::vector<PoseSample> samples) : samples_(std::move(samples)) {
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      if (samples_[i].t <= samples_[i - 1].t) {
        throw Error(ErrorCode::kOutOfOrder, "trajectory timestamps must be strictly increasing");
      }
    }
  }

  const std::vector<PoseSample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }
  Timestamp begin_time() const { return samples_.front().t; }
  Timestamp end_time() const { return samples_.back().t; }

  bool covers(Timestamp t) const { return !samples_.empty() && t >= begin_time() && t <= end_time(); }

  // Linear interpolation of translation, slerp of rotation.
  SE3 pose_at(Timestamp t) const {
    if (!covers(t)) {
      throw Error(ErrorCode::kOutOfRange, "time " + format_timestamp(t) + " outside trajectory");
    }
    auto hi = std::lower_bound(samples_.begin(), samples_.end(), t,
                               [](const PoseSample& s, Timestamp value) { return s.t < value; });
    if (hi->t == t) return hi->pose;
    auto lo = std::prev(hi);
    const double alpha = static_cast<double>(t - lo->t) / static_cast<double>(hi->t - lo->t);
    const Eigen::Quaterniond q = lo->pose.quaternion().slerp(alpha, hi->pose.quaternion());
    const Vec3 translation = (1.0 - alpha) * lo->pose.translation() + alpha * hi->pose.translation();
    return SE3::from_quaternion(q, translation);
  }

 private:
  std::vector<PoseSample> samples_;
};

// "t tx ty tz qx qy qz qw" per line, t in seconds.
inline Trajectory load_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open poses file " + path.string());
  std::vector<PoseSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    const auto tokens = detail::split_ws(line);
    if (tokens.size() != 8) {
      throw Error(ErrorCode::kParse, detail::line_error(path, line_no, "expected 't tx ty tz qx qy qz qw'"));
    }
    PoseSample s;
    double v[7];
    if (!parse_timestamp(tokens[0], s.t)) {
      throw Error(ErrorCode::kParse, detail::line_error(path, line_no, "malformed timestamp"));
    }
    for (int i = 0; i < 7; ++i) {
      if (!detail::parse_double(tokens[i + 1], v[i])) {
        throw Error(ErrorCode::kParse, detail::line_error(path, line_no, "malformed number"));
      }
    }
    Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
    if (std::abs(q.norm() - 1.0) > 1e-3) {
      throw Error(ErrorCode::kParse, detail::line_error(path, line_no, "quaternion is not unit length"));
    }
    s.pose = SE3::from_quaternion(q, Vec3(v[0], v[1], v[2]));
    if (!samples.empty() && s.t <= samples.back().t) {
      throw Error(ErrorCode::kOutOfOrder, detail::line_error(path, line_no, "timestamps must strictly increase"));
    }
    samples.push_back(s);
  }
  if (samples.empty()) throw Error(ErrorCode::kEmptyStream, path.string() + ": no poses");
  return Trajectory(std::move(samples));
}

inline void write_poses(const std::filesystem::path& path, std::span<const PoseSample> samples) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << std::setprecision(17);
  for (const PoseSample& s : samples) {
    const Eigen::Quaterniond q = s.pose.quaternion();
    const Vec3& t = s.pose.translation();
    out << format_timestamp(s.t) << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y()
        << ' ' << q.z() << ' ' << q.w() << '\n';
  }
}

}  // namespace evdepth
