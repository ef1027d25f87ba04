#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "evdepth/depth_estimation.hpp"
#include "evdepth/fusion.hpp"
#include "evdepth/image.hpp"
#include "evdepth/time_surface.hpp"

namespace evdepth {

struct DepthRow {
  PixelCoord pixel;
  double rho = 0.0;
  double sigma2 = 0.0;

  friend bool operator==(const DepthRow&, const DepthRow&) = default;
};

inline std::vector<DepthRow> depth_rows(const FusionGrid& grid) {
  std::vector<DepthRow> rows;
  grid.for_each_assigned([&](PixelCoord p, const GaussianInverseDepth& g) { rows.push_back({p, g.rho, g.sigma2}); });
  return rows;
}

inline std::vector<DepthRow> depth_rows(std::span<const InverseDepthEstimate> estimates) {
  std::vector<DepthRow> rows;
  rows.reserve(estimates.size());
  for (const auto& e : estimates) rows.push_back({e.pixel, e.rho, e.sigma2});
  return rows;
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

inline void check_written(const std::ofstream& out, const std::filesystem::path& path) {
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace detail

// Lossless "u,v,rho,sigma2" table (17 significant digits).
inline void write_depth_csv(const std::filesystem::path& path, std::span<const DepthRow> rows) {
  auto out = detail::open_for_write(path);
  out << "u,v,rho,sigma2\n" << std::setprecision(17);
  for (const DepthRow& r : rows) out << r.pixel.u << ',' << r.pixel.v << ',' << r.rho << ',' << r.sigma2 << '\n';
  detail::check_written(out, path);
}

inline std::vector<DepthRow> read_depth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<DepthRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || evdepth::detail::is_blank_or_comment(line)) continue;
    const auto t = evdepth::detail::split_ws(line);
    DepthRow r;
    if (t.size() != 4 || !evdepth::detail::parse_int(t[0], r.pixel.u) || !evdepth::detail::parse_int(t[1], r.pixel.v) ||
        !evdepth::detail::parse_double(t[2], r.rho) || !evdepth::detail::parse_double(t[3], r.sigma2)) {
      throw Error(ErrorCode::kParse, evdepth::detail::line_error(path, line_no, "expected 'u,v,rho,sigma2'"));
    }
    rows.push_back(r);
  }
  return rows;
}

// "u,v,rho" for every pixel with a ground-truth value (> 0).
inline void write_inverse_depth_map_csv(const std::filesystem::path& path, const Image<double>& map) {
  auto out = detail::open_for_write(path);
  out << "u,v,rho\n" << std::setprecision(17);
  for (int v = 0; v < map.height(); ++v)
    for (int u = 0; u < map.width(); ++u)
      if (map(u, v) > 0.0) out << u << ',' << v << ',' << map(u, v) << '\n';
  detail::check_written(out, path);
}

inline Image<double> read_inverse_depth_map_csv(const std::filesystem::path& path, int width, int height) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  Image<double> map(width, height, 0.0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || evdepth::detail::is_blank_or_comment(line)) continue;
    const auto t = evdepth::detail::split_ws(line);
    int u = 0, v = 0;
    double rho = 0.0;
    if (t.size() != 3 || !evdepth::detail::parse_int(t[0], u) || !evdepth::detail::parse_int(t[1], v) ||
        !evdepth::detail::parse_double(t[2], rho) || !map.contains(u, v)) {
      throw Error(ErrorCode::kParse, evdepth::detail::line_error(path, line_no, "expected 'u,v,rho' inside the image"));
    }
    map(u, v) = rho;
  }
  return map;
}

// 8-bit depth image: valid depths mapped linearly onto [1, 255] (near is
// dark), 0 where nothing was estimated.
inline void write_depth_pgm(const std::filesystem::path& path, std::span<const DepthRow> rows, int width,
                            int height) {
  Image<double> img(width, height, 0.0);
  double zmin = std::numeric_limits<double>::infinity(), zmax = 0.0;
  for (const auto& r : rows) {
    zmin = std::min(zmin, 1.0 / r.rho);
    zmax = std::max(zmax, 1.0 / r.rho);
  }
  const double span = zmax > zmin ? zmax - zmin : 1.0;
  for (const auto& r : rows) img(r.pixel.u, r.pixel.v) = 1.0 + 254.0 * (1.0 / r.rho - zmin) / span;
  write_pgm(path, img);
}

// 8-bit standard-deviation image scaled by the largest sigma.
inline void write_uncertainty_pgm(const std::filesystem::path& path, std::span<const DepthRow> rows, int width,
                                  int height) {
  Image<double> img(width, height, 0.0);
  double smax = 0.0;
  for (const auto& r : rows) smax = std::max(smax, std::sqrt(r.sigma2));
  for (const auto& r : rows) img(r.pixel.u, r.pixel.v) = smax > 0.0 ? 1.0 + 254.0 * std::sqrt(r.sigma2) / smax : 0.0;
  write_pgm(path, img);
}

// Writes the CSV and the PGM rendering of a depth map.
inline void export_depth_map(const FusionGrid& grid, const std::filesystem::path& csv_path,
                             const std::filesystem::path& pgm_path) {
  const auto rows = depth_rows(grid);
  write_depth_csv(csv_path, rows);
  write_depth_pgm(pgm_path, rows, grid.width(), grid.height());
}

// ASCII PLY; the gray color encodes confidence, 255 * (1 - sigma2 / max sigma2).
inline void export_point_cloud(std::span<const ScenePoint> points, const std::filesystem::path& path,
                               double variance_scale = 0.0) {
  if (variance_scale <= 0.0) {
    for (const auto& p : points) variance_scale = std::max(variance_scale, p.sigma2);
  }
  auto out = detail::open_for_write(path);
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << points.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n"
      << std::setprecision(17);
  for (const ScenePoint& p : points) {
    const double c = variance_scale > 0.0 ? 1.0 - p.sigma2 / variance_scale : 1.0;
    const int gray = static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
    out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << gray << ' ' << gray << ' '
        << gray << '\n';
  }
  detail::check_written(out, path);
}

}  // namespace evdepth
