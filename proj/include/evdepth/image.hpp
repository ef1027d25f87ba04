#pragma once

#include <cstddef>
#include <vector>

#include "evdepth/error.hpp"

namespace evdepth {

struct PixelCoord {
  int u = 0;
  int v = 0;

  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
  // Row-major ordering.
  friend bool operator<(const PixelCoord& a, const PixelCoord& b) {
    return a.v != b.v ? a.v < b.v : a.u < b.u;
  }
};

// Dense row-major image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height), data_(checked_size(width, height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width_ && v < height_; }

  T& operator()(int u, int v) { return data_[index(u, v)]; }
  const T& operator()(int u, int v) const { return data_[index(u, v)]; }

  const T* row(int v) const { return data_.data() + static_cast<std::size_t>(v) * width_; }
  T* row(int v) { return data_.data() + static_cast<std::size_t>(v) * width_; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(u);
  }

 private:
  static std::size_t checked_size(int width, int height) {
    if (width <= 0 || height <= 0) {
      throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
    }
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

}  // namespace evdepth
