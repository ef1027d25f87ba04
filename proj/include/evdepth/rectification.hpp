#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <string>

#include "evdepth/events.hpp"
#include "evdepth/geometry.hpp"
#include "evdepth/image.hpp"

namespace evdepth {

// Event carried into rectified coordinates. (u, v) is the rounded pixel used
// for map updates.
struct RectifiedEvent {
  Timestamp t = 0;
  double x = 0.0;
  double y = 0.0;
  int u = 0;
  int v = 0;
  int polarity = 1;
};

// Raw pixel -> rectified subpixel lookup, computed offline.
class RectificationMap {
 public:
  RectificationMap(int width, int height)
      : table_(width, height, Vec2(kInvalid, kInvalid)) {}

  static RectificationMap identity(int width, int height) {
    RectificationMap map(width, height);
    for (int v = 0; v < height; ++v)
      for (int u = 0; u < width; ++u) map.table_(u, v) = Vec2(u, v);
    return map;
  }

  // Evaluates f at every raw pixel; results outside the image become invalid.
  static RectificationMap from_function(int width, int height, const std::function<Vec2(int, int)>& f) {
    RectificationMap map(width, height);
    for (int v = 0; v < height; ++v)
      for (int u = 0; u < width; ++u) map.set(u, v, f(u, v));
    return map;
  }

  int width() const { return table_.width(); }
  int height() const { return table_.height(); }

  void set(int u, int v, const Vec2& rectified) {
    const bool inside = rectified.allFinite() && rectified.x() >= 0.0 && rectified.y() >= 0.0 &&
                        rectified.x() < width() && rectified.y() < height();
    table_(u, v) = inside ? rectified : Vec2(kInvalid, kInvalid);
  }

  void invalidate(int u, int v) { table_(u, v) = Vec2(kInvalid, kInvalid); }

  std::optional<Vec2> lookup(int u, int v) const {
    if (!table_.contains(u, v)) return std::nullopt;
    const Vec2& r = table_(u, v);
    if (std::isnan(r.x())) return std::nullopt;
    return r;
  }

  // Text grid: header "rectmap W H", then W*H row-major lines "x y" or
  // "invalid".
  static RectificationMap load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open rectification map " + path.string());
    std::string tag;
    int w = 0, h = 0;
    if (!(in >> tag >> w >> h) || tag != "rectmap" || w <= 0 || h <= 0) {
      throw Error(ErrorCode::kParse, path.string() + ": expected header 'rectmap W H'");
    }
    RectificationMap map(w, h);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        std::string a;
        if (!(in >> a)) throw Error(ErrorCode::kParse, path.string() + ": truncated grid");
        if (a == "invalid") continue;
        std::string b;
        double x = 0.0, y = 0.0;
        if (!(in >> b) || !detail::parse_double(a, x) || !detail::parse_double(b, y)) {
          throw Error(ErrorCode::kParse, path.string() + ": malformed grid entry");
        }
        map.set(u, v, Vec2(x, y));
      }
    }
    return map;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << "rectmap " << width() << ' ' << height() << '\n' << std::setprecision(17);
    for (int v = 0; v < height(); ++v) {
      for (int u = 0; u < width(); ++u) {
        const auto r = lookup(u, v);
        if (r) {
          out << r->x() << ' ' << r->y() << '\n';
        } else {
          out << "invalid\n";
        }
      }
    }
  }

 private:
  static constexpr double kInvalid = std::numeric_limits<double>::quiet_NaN();
  Image<Vec2> table_;
};

// Maps an event into rectified coordinates; empty when the raw pixel is
// invalid or rounds outside the image.
inline std::optional<RectifiedEvent> rectify(const Event& e, const RectificationMap& map) {
  const auto r = map.lookup(e.x, e.y);
  if (!r) return std::nullopt;
  const int u = static_cast<int>(std::lround(r->x()));
  const int v = static_cast<int>(std::lround(r->y()));
  if (u < 0 || v < 0 || u >= map.width() || v >= map.height()) return std::nullopt;
  return RectifiedEvent{e.t, r->x(), r->y(), u, v, e.polarity};
}

// rectify() with drop accounting.
class Rectifier {
 public:
  explicit Rectifier(const RectificationMap& map) : map_(map) {}

  std::optional<RectifiedEvent> operator()(const Event& e) {
    auto r = rectify(e, map_);
    if (r) {
      ++kept_;
    } else {
      ++dropped_;
    }
    return r;
  }

  std::vector<RectifiedEvent> apply(std::span<const Event> events) {
    std::vector<RectifiedEvent> out;
    out.reserve(events.size());
    for (const Event& e : events) {
      if (auto r = (*this)(e)) out.push_back(*r);
    }
    return out;
  }

  std::size_t kept() const { return kept_; }
  std::size_t dropped() const { return dropped_; }

 private:
  const RectificationMap& map_;
  std::size_t kept_ = 0;
  std::size_t dropped_ = 0;
};

}  // namespace evdepth
