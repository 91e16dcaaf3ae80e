#include "cowmask/gaussian_filter.hpp"

#include <algorithm>
#include <cmath>

#include "cowmask/error.hpp"

namespace cowmask {

namespace {

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ConfigError("sigma", "Gaussian filter scale must be positive and finite");
}

// out[y] = sum_k taps[k] * in[reflect(y - r + k)], accumulated as whole-row
// axpys so the inner loop is contiguous.
void vertical_pass(const Plane& in, const std::vector<double>& taps, Plane& out) {
  const int radius = static_cast<int>(taps.size() / 2);
  const int width = in.width;
  for (int y = 0; y < in.height; ++y) {
    double* dst = out.row(y).data();
    std::fill(dst, dst + width, 0.0);
    for (std::size_t k = 0; k < taps.size(); ++k) {
      const double t = taps[k];
      const double* src = in.row(reflect_index(y - radius + static_cast<int>(k), in.height)).data();
      for (int x = 0; x < width; ++x) dst[x] += t * src[x];
    }
  }
}

Plane transpose(const Plane& in) {
  Plane out(in.width, in.height);
  constexpr int kBlock = 32;
  for (int y0 = 0; y0 < in.height; y0 += kBlock)
    for (int x0 = 0; x0 < in.width; x0 += kBlock)
      for (int y = y0; y < std::min(y0 + kBlock, in.height); ++y)
        for (int x = x0; x < std::min(x0 + kBlock, in.width); ++x) out.at(x, y) = in.at(y, x);
  return out;
}

}  // namespace

int gaussian_radius(double sigma) {
  check_sigma(sigma);
  return static_cast<int>(std::ceil(3.0 * sigma));
}

std::vector<double> gaussian_kernel_1d(double sigma) {
  const int radius = gaussian_radius(sigma);
  std::vector<double> taps(2 * static_cast<std::size_t>(radius) + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& t : taps) t /= total;
  return taps;
}

int reflect_index(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  int k = i % period;
  if (k < 0) k += period;
  return k < n ? k : period - 1 - k;
}

Plane gaussian_filter_2d(const Plane& input, double sigma) {
  const std::vector<double> taps = gaussian_kernel_1d(sigma);
  Plane tmp(input.height, input.width);
  vertical_pass(input, taps, tmp);
  // Horizontal pass as a vertical pass over the transpose.
  const Plane tmp_t = transpose(tmp);
  Plane out_t(tmp_t.height, tmp_t.width);
  vertical_pass(tmp_t, taps, out_t);
  return transpose(out_t);
}

Plane gaussian_filter_2d_direct(const Plane& input, double sigma) {
  const std::vector<double> taps = gaussian_kernel_1d(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  Plane out(input.height, input.width);
  for (int y = 0; y < input.height; ++y) {
    for (int x = 0; x < input.width; ++x) {
      double acc = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const double wy = taps[static_cast<std::size_t>(dy + radius)];
        const double* src = input.row(reflect_index(y + dy, input.height)).data();
        for (int dx = -radius; dx <= radius; ++dx)
          acc += wy * taps[static_cast<std::size_t>(dx + radius)] *
                 src[reflect_index(x + dx, input.width)];
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

}  // namespace cowmask
