#pragma once

#include <vector>

#include "cowmask/plane.hpp"

namespace cowmask {

/// Truncation radius used by all Gaussian filtering: ceil(3 sigma).
int gaussian_radius(double sigma);

/// Normalized 1D Gaussian taps, length 2 * gaussian_radius(sigma) + 1.
std::vector<double> gaussian_kernel_1d(double sigma);

/// Half-sample symmetric reflection (d c b a | a b c d | d c b a) of an
/// arbitrary index into [0, n). Handles offsets of any magnitude.
int reflect_index(int i, int n) noexcept;

/// Separable Gaussian blur with reflect boundary: a vertical pass followed by
/// a horizontal pass, both with the truncated normalized kernel.
/// Throws ConfigError for sigma <= 0.
Plane gaussian_filter_2d(const Plane& input, double sigma);

/// Reference path: direct convolution with the full (2r+1)^2 kernel.
/// O(r^2) per pixel; used as the oracle and benchmark baseline.
Plane gaussian_filter_2d_direct(const Plane& input, double sigma);

}  // namespace cowmask
