#pragma once

// Independent reference implementations used only by tests.

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "cowmask/plane.hpp"

namespace cowmask::oracle {

using real = long double;

/// erf(x) by its Maclaurin series; accurate in long double for |x| <= 2.
inline real erf_series(real x) {
  real term = x;
  real sum = x;
  const real x2 = x * x;
  for (int n = 1; n < 200; ++n) {
    term *= -x2 / n;
    const real add = term / (2 * n + 1);
    sum += add;
    if (std::fabs(add) < 1e-24L * std::fabs(sum)) break;
  }
  return sum * 2.0L / std::sqrt(std::numbers::pi_v<real>);
}

/// 20-point Gauss-Legendre nodes and weights on [-1, 1], by Newton on P_20.
struct GaussLegendre20 {
  std::array<real, 20> nodes{};
  std::array<real, 20> weights{};

  GaussLegendre20() {
    constexpr int n = 20;
    for (int i = 0; i < n; ++i) {
      real x = std::cos(std::numbers::pi_v<real> * (i + 0.75L) / (n + 0.5L));
      real dp = 0.0L;
      for (int it = 0; it < 100; ++it) {
        real p0 = 1.0L;
        real p1 = x;
        for (int k = 2; k <= n; ++k) {
          const real p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0L);
        const real dx = p1 / dp;
        x -= dx;
        if (std::fabs(dx) < 1e-30L) break;
      }
      nodes[i] = x;
      weights[i] = 2.0L / ((1.0L - x * x) * dp * dp);
    }
  }
};

/// erfc(x) for x >= 0 as 2/sqrt(pi) * integral_x^{x+12} exp(-t^2) dt by
/// composite Gauss-Legendre quadrature over panels of width 0.25.
inline real erfc_quadrature(real x) {
  static const GaussLegendre20 gl;
  constexpr real panel = 0.25L;
  constexpr int panels = 48;
  real sum = 0.0L;
  for (int k = 0; k < panels; ++k) {
    const real a = x + k * panel;
    const real mid = a + panel / 2;
    for (int i = 0; i < 20; ++i) {
      const real t = mid + panel / 2 * gl.nodes[i];
      sum += gl.weights[i] * std::exp(-t * t);
    }
  }
  return sum * panel / 2 * 2.0L / std::sqrt(std::numbers::pi_v<real>);
}

inline real erf_ref(real x) {
  if (x < 0) return -erf_ref(-x);
  return x <= 1.5L ? erf_series(x) : 1.0L - erfc_quadrature(x);
}

inline real erfc_ref(real x) {
  return x <= 1.5L ? 1.0L - erf_series(x) : erfc_quadrature(x);
}

/// x with erf(x) = y, by bisection. For y > 0.5 the bisection targets
/// erfc(x) = 1 - y so the tail keeps full relative precision.
inline double inverse_erf_ref(double y) {
  if (y < 0) return -inverse_erf_ref(-y);
  const bool tail = y > 0.5;
  const real target = tail ? 1.0L - static_cast<real>(y) : static_cast<real>(y);
  real lo = 0.0L;
  real hi = 7.0L;
  for (int it = 0; it < 80; ++it) {
    const real mid = (lo + hi) / 2;
    const bool below = tail ? erfc_ref(mid) > target : erf_ref(mid) < target;
    (below ? lo : hi) = mid;
  }
  return static_cast<double>((lo + hi) / 2);
}

/// Mirror index with the edge sample repeated (d c b a | a b c d | d c b a),
/// folding as many times as needed.
inline int mirror(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

/// Direct 2D convolution with the normalized Gaussian truncated to the
/// square of half-width ceil(3 sigma), reflect boundary.
inline Plane gaussian_2d(const Plane& in, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<real> k2(static_cast<std::size_t>(2 * r + 1) * (2 * r + 1));
  real total = 0.0L;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const real w = std::exp(-static_cast<real>(dx * dx + dy * dy) / (2.0L * sigma * sigma));
      k2[static_cast<std::size_t>(dy + r) * (2 * r + 1) + (dx + r)] = w;
      total += w;
    }
  Plane out(in.height, in.width);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      real acc = 0.0L;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
          acc += k2[static_cast<std::size_t>(dy + r) * (2 * r + 1) + (dx + r)] *
                 in.at(mirror(y + dy, in.height), mirror(x + dx, in.width));
      out.at(y, x) = static_cast<double>(acc / total);
    }
  return out;
}

}  // namespace cowmask::oracle
