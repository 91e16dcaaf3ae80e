#include <doctest.h>

#include <cmath>
#include <map>

#include "cowmask/error.hpp"
#include "cowmask/imageops.hpp"
#include "oracles.hpp"

using namespace cowmask;

namespace {

ImageBatch random_batch(int n, int c, int h, int w, std::uint64_t seed) {
  ImageBatch b(n, c, h, w);
  Rng rng(seed);
  rng.fill_normal(b.data);
  for (int i = 0; i < n; ++i) b.labels[static_cast<std::size_t>(i)] = i % 3;
  return b;
}

Mask constant_mask(int h, int w, double v) {
  Mask m;
  m.kind = MaskKind::constant;
  m.plane = Plane(h, w, v);
  return m;
}

// Explicit pad-then-crop-then-flip of one channel.
std::vector<double> crop_ref(std::span<const double> img, int h, int w, int pad, const AugDraw& d) {
  const int ph = h + 2 * pad;
  const int pw = w + 2 * pad;
  std::vector<double> padded(static_cast<std::size_t>(ph) * pw);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x)
      padded[static_cast<std::size_t>(y) * pw + x] =
          img[static_cast<std::size_t>(oracle::mirror(y - pad, h)) * w + oracle::mirror(x - pad, w)];
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int cx = d.offset_x + x;
      out[static_cast<std::size_t>(y) * w + (d.flip ? w - 1 - x : x)] =
          padded[static_cast<std::size_t>(d.offset_y + y) * pw + cx];
    }
  return out;
}

}  // namespace

TEST_CASE("centre crop without flip is the identity") {
  const ImageBatch b = random_batch(1, 2, 5, 7, 1);
  ImageBatch out = b;
  augment_image(b.image(0), out.image(0), 2, 5, 7, 2, AugDraw{2, 2, false});
  CHECK(out.data == b.data);
}

TEST_CASE("crop and flip match an explicit pad-crop-flip reference") {
  const ImageBatch b = random_batch(1, 3, 6, 5, 2);
  Rng rng(3);
  const AugPolicy policy{3, 0.5};
  for (int t = 0; t < 50; ++t) {
    const AugDraw d = draw_augmentation(policy, rng);
    ImageBatch out = b;
    augment_image(b.image(0), out.image(0), 3, 6, 5, 3, d);
    for (int c = 0; c < 3; ++c) {
      const auto src = b.image(0).subspan(static_cast<std::size_t>(c) * 30, 30);
      const auto expect = crop_ref(src, 6, 5, 3, d);
      for (std::size_t k = 0; k < 30; ++k) CHECK(out.image(0)[c * 30 + k] == expect[k]);
    }
  }
}

TEST_CASE("crop offsets are uniform over the padded window") {
  Rng rng(4);
  const AugPolicy policy{2, 0.5};
  std::map<std::pair<int, int>, int> counts;
  int flips = 0;
  constexpr int n = 25000;
  for (int i = 0; i < n; ++i) {
    const AugDraw d = draw_augmentation(policy, rng);
    REQUIRE(d.offset_y >= 0);
    REQUIRE(d.offset_y <= 4);
    REQUIRE(d.offset_x >= 0);
    REQUIRE(d.offset_x <= 4);
    ++counts[{d.offset_y, d.offset_x}];
    flips += d.flip;
  }
  REQUIRE(counts.size() == 25);
  double chi2 = 0.0;
  for (const auto& [cell, c] : counts) chi2 += (c - n / 25.0) * (c - n / 25.0) / (n / 25.0);
  CHECK(chi2 < 51.18);  // chi-square, 24 dof, p = 0.001
  CHECK(std::abs(flips / static_cast<double>(n) - 0.5) < 0.02);
}

TEST_CASE("augmentation draws a fixed number of words") {
  Rng a(5);
  draw_augmentation({0, 0.0}, a);
  CHECK(a.state().position == 3);
  Rng b(5);
  weak_augment(random_batch(4, 1, 4, 4, 0), {2, 1.0}, b);
  CHECK(b.state().position == 12);
}

TEST_CASE("flip probability extremes") {
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(draw_augmentation({1, 0.0}, rng).flip);
    CHECK(draw_augmentation({1, 1.0}, rng).flip);
  }
}

TEST_CASE("weak augmentation keeps labels and shape") {
  const ImageBatch b = random_batch(5, 1, 8, 8, 7);
  Rng rng(8);
  const ImageBatch out = weak_augment(b, {2, 0.5}, rng);
  CHECK(out.same_shape(b));
  CHECK(out.labels == b.labels);
}

TEST_CASE("invalid augmentation policies") {
  CHECK_THROWS_AS((AugPolicy{-1, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((AugPolicy{2, 1.5}.validate()), ConfigError);
}

TEST_CASE("erasure copies where the mask is one and fills noise where it is zero") {
  const ImageBatch b = random_batch(2, 2, 16, 16, 9);
  Mask half = constant_mask(16, 16, 1.0);
  for (int y = 0; y < 16; ++y)
    for (int x = 8; x < 16; ++x) half.plane.at(y, x) = 0.0;
  const std::vector<Mask> masks{half, constant_mask(16, 16, 0.0)};
  Rng rng(10);
  const ImageBatch out = erase_with_mask(b, masks, rng);
  CHECK(rng.state().position == 2 * 2 * 256);

  Rng replay(10);
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 2; ++c)
      for (int p = 0; p < 256; ++p) {
        const double eps = replay.normal();
        const std::size_t k = static_cast<std::size_t>(c) * 256 + p;
        const double m = masks[i].plane.values[p];
        CHECK(out.image(i)[k] == (m == 1.0 ? b.image(i)[k] : eps));
      }
}

TEST_CASE("fractional erasure blends input and noise") {
  const ImageBatch b = random_batch(1, 1, 3, 3, 11);
  const std::vector<Mask> masks{constant_mask(3, 3, 0.25)};
  Rng rng(12);
  const ImageBatch out = erase_with_mask(b, masks, rng);
  Rng replay(12);
  for (int p = 0; p < 9; ++p) {
    const double eps = replay.normal();
    CHECK(out.data[p] == doctest::Approx(0.25 * b.data[p] + 0.75 * eps).epsilon(1e-15));
  }
}

TEST_CASE("mixing takes a where the mask is one and b where it is zero") {
  const ImageBatch a = random_batch(3, 2, 6, 6, 13);
  const ImageBatch b = random_batch(3, 2, 6, 6, 14);
  Rng rng(15);
  std::vector<Mask> masks;
  for (int i = 0; i < 3; ++i) masks.push_back(make_cow_mask({1.0, 3.0, 0.2, 0.8, 6, 6}, rng));
  const MixResult r = mix_with_mask(a, b, masks);
  for (int i = 0; i < 3; ++i) {
    CHECK(r.mix_weights[i] == masks[i].mean());
    CHECK(r.images.labels[i] == kUnlabeled);
    for (int c = 0; c < 2; ++c)
      for (int p = 0; p < 36; ++p) {
        const std::size_t k = static_cast<std::size_t>(c) * 36 + p;
        CHECK(r.images.image(i)[k] == (masks[i].plane.values[p] == 1.0 ? a.image(i)[k] : b.image(i)[k]));
      }
  }
}

TEST_CASE("mixing is symmetric under swapping inputs and inverting the mask") {
  const ImageBatch a = random_batch(2, 1, 5, 5, 16);
  const ImageBatch b = random_batch(2, 1, 5, 5, 17);
  Rng rng(18);
  std::vector<Mask> masks{make_cow_mask({1.0, 2.0, 0.3, 0.7, 5, 5}, rng), constant_mask(5, 5, 0.3)};
  std::vector<Mask> inverted = masks;
  for (auto& m : inverted)
    for (double& v : m.plane.values) v = 1.0 - v;
  const MixResult ab = mix_with_mask(a, b, masks);
  const MixResult ba = mix_with_mask(b, a, inverted);
  for (std::size_t k = 0; k < ab.images.data.size(); ++k)
    CHECK(ab.images.data[k] == doctest::Approx(ba.images.data[k]).epsilon(1e-15));
  for (int i = 0; i < 2; ++i) CHECK(ab.mix_weights[i] == doctest::Approx(1.0 - ba.mix_weights[i]).epsilon(1e-15));
}

TEST_CASE("shape mismatches are rejected") {
  const ImageBatch a = random_batch(2, 1, 4, 4, 19);
  const ImageBatch b = random_batch(2, 1, 4, 5, 20);
  const std::vector<Mask> good{constant_mask(4, 4, 1.0), constant_mask(4, 4, 0.0)};
  const std::vector<Mask> short_list{constant_mask(4, 4, 1.0)};
  const std::vector<Mask> wrong_size{constant_mask(4, 4, 1.0), constant_mask(3, 4, 1.0)};
  Rng rng(0);
  CHECK_THROWS_AS(mix_with_mask(a, b, good), ShapeError);
  CHECK_THROWS_AS(mix_with_mask(a, a, short_list), ShapeError);
  CHECK_THROWS_AS(erase_with_mask(a, wrong_size, rng), ShapeError);
}

TEST_CASE("gather copies images and labels in order") {
  const ImageBatch b = random_batch(4, 2, 3, 3, 21);
  const std::vector<int> idx{3, 1, 3};
  const ImageBatch g = b.gather(idx);
  REQUIRE(g.n == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(g.labels[i] == b.labels[idx[i]]);
    for (std::size_t k = 0; k < g.image_size(); ++k) CHECK(g.image(i)[k] == b.image(idx[i])[k]);
  }
}
