#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "cowmask/plane.hpp"
#include "cowmask/rng.hpp"

namespace cowmask {

enum class MaskKind { cow, box, constant };

std::string_view to_string(MaskKind kind) noexcept;
MaskKind parse_mask_kind(std::string_view name);

/// Parameters for thresholded Gaussian-filtered noise masks.
struct CowMaskConfig {
  double sigma_min = 4.0;
  double sigma_max = 16.0;
  double p_min = 0.2;
  double p_max = 0.8;
  int height = 32;
  int width = 32;

  void validate() const;
};

/// One axis-aligned zero rectangle inside a field of ones.
struct BoxMaskConfig {
  double area_min = 0.25;
  double area_max = 0.25;
  int height = 32;
  int width = 32;

  void validate() const;
};

/// Scalar blend mask with lambda ~ Beta(a, a).
struct ConstantMaskConfig {
  double beta_param = 1.0;
  int height = 32;
  int width = 32;

  void validate() const;
};

using MaskConfig = std::variant<CowMaskConfig, BoxMaskConfig, ConstantMaskConfig>;

/// A spatial H x W blend mask with values in [0, 1].
///
/// `sigma` and `proportion` record the parameters drawn for this mask:
/// filter scale and target proportion of ones for cow masks, 0 and the
/// drawn area fraction for box masks, 0 and lambda for constant masks.
struct Mask {
  MaskKind kind = MaskKind::cow;
  Plane plane;
  double sigma = 0.0;
  double proportion = 0.0;

  int height() const noexcept { return plane.height; }
  int width() const noexcept { return plane.width; }
  double mean() const;
  double ones_fraction() const;
};

/// Random draws consumed by one cow mask: sigma, p, then one normal per pixel.
std::uint64_t cow_mask_draws(const CowMaskConfig& cfg) noexcept;
/// Random draws consumed by one box mask: area, aspect ratio, row, column.
inline constexpr std::uint64_t kBoxMaskDraws = 4;

/// Threshold applied to filtered noise with mean m and std-dev s so that a
/// fraction p of a Gaussian field falls at or below it:
/// m + sqrt(2) * erfinv(2p - 1) * s. p <= 0 and p >= 1 map to -inf / +inf;
/// otherwise the erfinv argument is clamped to [-1 + 1e-7, 1 - 1e-7].
double cow_threshold(double mean, double stddev, double p);

Mask make_cow_mask(const CowMaskConfig& cfg, Rng& rng);
Mask make_box_mask(const BoxMaskConfig& cfg, Rng& rng);
Mask make_constant_mask(const ConstantMaskConfig& cfg, Rng& rng);
Mask make_mask(const MaskConfig& cfg, Rng& rng);

/// `n` independent masks. For cow and box masks each mask starts at a fixed
/// stream offset, so the result is bit-identical for any `workers` count and
/// equal to n sequential single-mask calls. `workers == 0` uses the hardware
/// concurrency.
std::vector<Mask> make_batch(const MaskConfig& cfg, int n, Rng& rng, int workers = 1);

/// Number of 4-connected components of pixels with value 1.
int count_components(const Plane& binary);

}  // namespace cowmask
