#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <string>

#include "evdepth/events.hpp"
#include "evdepth/geometry.hpp"

namespace evdepth {

// Rectified stereo pair. left_to_right maps points from the left camera frame
// into the right camera frame; the right projection is applied after it, so
// the baseline belongs in exactly one of the two.
struct StereoRig {
  RectifiedCamera left;
  RectifiedCamera right;
  SE3 left_to_right;

  int width() const { return left.width; }
  int height() const { return left.height; }
};

struct Calibration {
  StereoRig rig;
  std::optional<std::filesystem::path> rectmap_left;
  std::optional<std::filesystem::path> rectmap_right;
};

// Key/value text, one entry per line, '#' starts a comment:
//   resolution W H
//   P_left  p11 p12 p13 p14 p21 ... p34     (row-major 3x4)
//   P_right p11 ... p34
//   T_E     r11 r12 r13 tx r21 r22 r23 ty r31 r32 r33 tz
//   rectmap_left  <path>    (optional, relative to this file)
//   rectmap_right <path>    (optional)
inline Calibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open calibration file " + path.string());

  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    const auto tokens = detail::split_ws(line);
    std::string key(tokens.front());
    if (entries.count(key)) {
      throw Error(ErrorCode::kParse, detail::line_error(path, line_no, "duplicate key " + key));
    }
    std::vector<std::string> values;
    for (std::size_t i = 1; i < tokens.size(); ++i) values.emplace_back(tokens[i]);
    entries.emplace(std::move(key), std::move(values));
  }

  auto require = [&](const std::string& key, std::size_t count) -> const std::vector<std::string>& {
    auto it = entries.find(key);
    if (it == entries.end()) throw Error(ErrorCode::kParse, path.string() + ": missing key " + key);
    if (it->second.size() != count) {
      throw Error(ErrorCode::kParse, path.string() + ": key " + key + " expects " + std::to_string(count) + " values");
    }
    return it->second;
  };
  auto numbers = [&](const std::string& key, std::size_t count) {
    std::vector<double> out(count);
    const auto& values = require(key, count);
    for (std::size_t i = 0; i < count; ++i) {
      if (!detail::parse_double(values[i], out[i])) {
        throw Error(ErrorCode::kParse, path.string() + ": malformed number in " + key);
      }
    }
    return out;
  };
  auto matrix34 = [&](const std::string& key) {
    const auto v = numbers(key, 12);
    Mat34 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
    return m;
  };

  const auto res = numbers("resolution", 2);
  const int width = static_cast<int>(res[0]);
  const int height = static_cast<int>(res[1]);
  if (width <= 0 || height <= 0 || res[0] != width || res[1] != height) {
    throw Error(ErrorCode::kParse, path.string() + ": resolution must be two positive integers");
  }

  Calibration calib;
  // Bad geometry in the file is a data error, not a programming one.
  try {
    calib.rig.left = RectifiedCamera::from_projection(matrix34("P_left"), width, height);
    calib.rig.right = RectifiedCamera::from_projection(matrix34("P_right"), width, height);
    const Mat34 te = matrix34("T_E");
    calib.rig.left_to_right = SE3::checked(te.leftCols<3>(), te.col(3), 1e-6);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInvalidArgument) throw;
    throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
  }
  if (!calib.rig.left.has_zero_fourth_column()) {
    throw Error(ErrorCode::kParse, path.string() + ": P_left must have a zero fourth column");
  }

  const auto base = path.parent_path();
  for (const char* key : {"rectmap_left", "rectmap_right"}) {
    if (entries.count(key)) {
      std::filesystem::path p(require(key, 1).front());
      if (p.is_relative()) p = base / p;
      (std::string(key) == "rectmap_left" ? calib.rectmap_left : calib.rectmap_right) = p;
    }
  }
  return calib;
}

inline void write_calibration(const std::filesystem::path& path, const Calibration& calib) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << std::setprecision(17);
  out << "# evdepth rectified stereo calibration\n";
  out << "resolution " << calib.rig.width() << ' ' << calib.rig.height() << '\n';
  auto write34 = [&](const char* key, const Mat34& m) {
    out << key;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) out << ' ' << m(r, c);
    out << '\n';
  };
  write34("P_left", calib.rig.left.projection());
  write34("P_right", calib.rig.right.projection());
  Mat34 te;
  te.leftCols<3>() = calib.rig.left_to_right.rotation();
  te.col(3) = calib.rig.left_to_right.translation();
  write34("T_E", te);
  if (calib.rectmap_left) out << "rectmap_left " << calib.rectmap_left->string() << '\n';
  if (calib.rectmap_right) out << "rectmap_right " << calib.rectmap_right->string() << '\n';
}

}  // namespace evdepth
