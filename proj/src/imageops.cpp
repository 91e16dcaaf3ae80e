#include "cowmask/imageops.hpp"

#include <string>

#include "cowmask/error.hpp"
#include "cowmask/gaussian_filter.hpp"

namespace cowmask {

namespace {

void check_masks(const ImageBatch& batch, std::span<const Mask> masks) {
  if (masks.size() != static_cast<std::size_t>(batch.n))
    throw ShapeError("expected " + std::to_string(batch.n) + " masks, got " +
                     std::to_string(masks.size()));
  for (const Mask& m : masks)
    if (m.height() != batch.height || m.width() != batch.width)
      throw ShapeError("mask size does not match image size");
}

}  // namespace

ImageBatch ImageBatch::gather(std::span<const int> indices) const {
  ImageBatch out(static_cast<int>(indices.size()), channels, height, width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = image(indices[i]);
    std::copy(src.begin(), src.end(), out.image(static_cast<int>(i)).begin());
    out.labels[i] = labels[static_cast<std::size_t>(indices[i])];
  }
  return out;
}

void AugPolicy::validate() const {
  if (pad_pixels < 0) throw ConfigError("pad_pixels", "must be non-negative");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob", "must lie in [0, 1]");
}

AugDraw draw_augmentation(const AugPolicy& policy, Rng& rng) {
  const auto span = static_cast<std::uint64_t>(2 * policy.pad_pixels + 1);
  AugDraw d;
  d.offset_y = static_cast<int>(rng.below(span));
  d.offset_x = static_cast<int>(rng.below(span));
  d.flip = rng.uniform() < policy.flip_prob;
  return d;
}

void augment_image(std::span<const double> src, std::span<double> dst, int channels, int height,
                   int width, int pad, const AugDraw& draw) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int c = 0; c < channels; ++c) {
    const double* s = src.data() + c * plane;
    double* d = dst.data() + c * plane;
    for (int y = 0; y < height; ++y) {
      const int sy = reflect_index(y + draw.offset_y - pad, height);
      for (int x = 0; x < width; ++x) {
        const int cx = draw.flip ? width - 1 - x : x;
        const int sx = reflect_index(cx + draw.offset_x - pad, width);
        d[static_cast<std::size_t>(y) * width + x] = s[static_cast<std::size_t>(sy) * width + sx];
      }
    }
  }
}

ImageBatch weak_augment(const ImageBatch& batch, const AugPolicy& policy, Rng& rng) {
  policy.validate();
  ImageBatch out = batch;
  for (int i = 0; i < batch.n; ++i) {
    const AugDraw draw = draw_augmentation(policy, rng);
    augment_image(batch.image(i), out.image(i), batch.channels, batch.height, batch.width,
                  policy.pad_pixels, draw);
  }
  return out;
}

ImageBatch erase_with_mask(const ImageBatch& batch, std::span<const Mask> masks, Rng& rng) {
  check_masks(batch, masks);
  ImageBatch out = batch;
  const std::size_t plane = static_cast<std::size_t>(batch.height) * batch.width;
  for (int i = 0; i < batch.n; ++i) {
    const auto& m = masks[static_cast<std::size_t>(i)].plane.values;
    auto dst = out.image(i);
    const auto src = batch.image(i);
    for (int c = 0; c < batch.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t k = c * plane + p;
        const double eps = rng.normal();
        if (m[p] == 1.0) dst[k] = src[k];
        else if (m[p] == 0.0) dst[k] = eps;
        else dst[k] = src[k] * m[p] + eps * (1.0 - m[p]);
      }
    }
  }
  return out;
}

MixResult mix_with_mask(const ImageBatch& a, const ImageBatch& b, std::span<const Mask> masks) {
  if (!a.same_shape(b)) throw ShapeError("mixed batches differ in shape");
  check_masks(a, masks);
  MixResult result;
  result.images = ImageBatch(a.n, a.channels, a.height, a.width);
  result.mix_weights.resize(static_cast<std::size_t>(a.n));
  const std::size_t plane = static_cast<std::size_t>(a.height) * a.width;
  for (int i = 0; i < a.n; ++i) {
    const Mask& mask = masks[static_cast<std::size_t>(i)];
    const auto& m = mask.plane.values;
    const auto xa = a.image(i);
    const auto xb = b.image(i);
    auto dst = result.images.image(i);
    for (int c = 0; c < a.channels; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t k = c * plane + p;
        if (m[p] == 1.0) dst[k] = xa[k];
        else if (m[p] == 0.0) dst[k] = xb[k];
        else dst[k] = xa[k] * m[p] + xb[k] * (1.0 - m[p]);
      }
    }
    result.mix_weights[static_cast<std::size_t>(i)] = mask.mean();
  }
  return result;
}

}  // namespace cowmask
