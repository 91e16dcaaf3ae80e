#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cowmask/maskgen.hpp"
#include "cowmask/rng.hpp"

namespace cowmask {

inline constexpr int kUnlabeled = -1;

/// N x C x H x W batch of real-valued images with one label per image.
/// A label of kUnlabeled marks an unlabeled sample.
struct ImageBatch {
  int n = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;
  std::vector<int> labels;

  ImageBatch() = default;
  ImageBatch(int n_, int c, int h, int w)
      : n(n_), channels(c), height(h), width(w),
        data(static_cast<std::size_t>(n_) * c * h * w, 0.0),
        labels(static_cast<std::size_t>(n_), kUnlabeled) {}

  std::size_t image_size() const noexcept {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::span<double> image(int i) { return {data.data() + i * image_size(), image_size()}; }
  std::span<const double> image(int i) const {
    return {data.data() + i * image_size(), image_size()};
  }
  bool same_shape(const ImageBatch& other) const noexcept {
    return n == other.n && channels == other.channels && height == other.height &&
           width == other.width;
  }

  /// Copy of the listed images, in order.
  ImageBatch gather(std::span<const int> indices) const;
};

/// Weak augmentation: reflect pad, random crop back to H x W, horizontal flip.
struct AugPolicy {
  int pad_pixels = 2;
  double flip_prob = 0.5;

  void validate() const;
};

/// Per-image augmentation draw. Offsets are in [0, 2 * pad]; an offset of
/// `pad` on both axes is the identity crop.
struct AugDraw {
  int offset_y = 0;
  int offset_x = 0;
  bool flip = false;
};

/// Consumes exactly three draws regardless of the policy.
AugDraw draw_augmentation(const AugPolicy& policy, Rng& rng);

/// Crop/flip one C x H x W image into `dst` according to `draw`.
void augment_image(std::span<const double> src, std::span<double> dst, int channels, int height,
                   int width, int pad, const AugDraw& draw);

ImageBatch weak_augment(const ImageBatch& batch, const AugPolicy& policy, Rng& rng);

/// x * m + eps * (1 - m) with fresh eps ~ N(0, 1) per pixel and channel.
/// The mask is broadcast across channels; pixels where m == 1 are copied.
ImageBatch erase_with_mask(const ImageBatch& batch, std::span<const Mask> masks, Rng& rng);

struct MixResult {
  ImageBatch images;
  /// Mean of each pair's mask: the share of the mixed image taken from `a`.
  std::vector<double> mix_weights;
};

/// a * m + b * (1 - m) per pixel, mask broadcast across channels.
/// Labels of the result are kUnlabeled.
MixResult mix_with_mask(const ImageBatch& a, const ImageBatch& b, std::span<const Mask> masks);

}  // namespace cowmask
