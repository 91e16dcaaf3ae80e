#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cowmask {

/// Row-major H x W grid of doubles.
struct Plane {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::span<double> row(int y) {
    return {values.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)};
  }
  std::span<const double> row(int y) const {
    return {values.data() + static_cast<std::size_t>(y) * width, static_cast<std::size_t>(width)};
  }
};

}  // namespace cowmask
