#include <algorithm>
#include <cmath>
#include <numbers>

#include "cowmask/dataset.hpp"
#include "cowmask/error.hpp"

namespace cowmask {

namespace {

constexpr int kGratings = 3;
constexpr double kBandLo = 1.0;
constexpr double kBandHiFraction = 0.35;

struct Band {
  double lo;
  double hi;
};

// Unit-RMS sum of gratings with random orientation and phase and radial
// frequency (cycles per image) drawn from `band`.
void draw_texture(int size, Band band, Rng& rng, std::vector<double>& out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (int g = 0; g < kGratings; ++g) {
    const double radius = rng.uniform(band.lo, band.hi);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double fy = radius * std::sin(angle) / size;
    const double fx = radius * std::cos(angle) / size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        out[static_cast<std::size_t>(y) * size + x] +=
            std::cos(2.0 * std::numbers::pi * (fy * y + fx * x) + phase);
  }
  double ss = 0.0;
  for (double v : out) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(out.size()));
  for (double& v : out) v /= rms;
}

Dataset render(const SyntheticSpec& spec, int count, std::uint64_t first_id, Rng& rng) {
  Dataset d;
  d.channels = 1;
  d.height = spec.size;
  d.width = spec.size;
  d.num_classes = spec.classes;
  d.pixels.resize(static_cast<std::size_t>(count) * spec.size * spec.size);
  d.labels.resize(static_cast<std::size_t>(count));
  d.ids.resize(static_cast<std::size_t>(count));

  const double hi = kBandHiFraction * spec.size;
  const double width = (hi - kBandLo) / spec.classes;
  std::vector<double> texture(static_cast<std::size_t>(spec.size) * spec.size);
  for (int i = 0; i < count; ++i) {
    const int label = i % spec.classes;
    const double lo = kBandLo + label * width;
    draw_texture(spec.size, {lo, lo + (1.0 - spec.band_gap) * width}, rng, texture);
    const double amp = spec.contrast * (1.0 + spec.amplitude_jitter * rng.uniform(-1.0, 1.0));
    std::uint8_t* dst = d.pixels.data() + static_cast<std::size_t>(i) * texture.size();
    for (std::size_t k = 0; k < texture.size(); ++k) {
      const double v = 0.5 + amp * texture[k] + spec.noise_level * rng.normal();
      dst[k] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
    d.labels[static_cast<std::size_t>(i)] = label;
    d.ids[static_cast<std::size_t>(i)] = first_id + static_cast<std::uint64_t>(i);
  }
  return d;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 2) throw ConfigError("synthetic_classes", "need at least 2 classes");
  if (size < 4 || size % 4 != 0) throw ConfigError("synthetic_size", "must be a positive multiple of 4");
  if (train_count < classes) throw ConfigError("synthetic_train", "fewer samples than classes");
  if (test_count < 1) throw ConfigError("synthetic_test", "must be at least 1");
  if (!(noise_level >= 0.0)) throw ConfigError("synthetic_noise", "must be non-negative");
  if (!(contrast > 0.0)) throw ConfigError("synthetic_contrast", "must be positive");
  if (!(amplitude_jitter >= 0.0 && amplitude_jitter < 1.0))
    throw ConfigError("synthetic_jitter", "must lie in [0, 1)");
  if (!(band_gap >= 0.0 && band_gap < 1.0)) throw ConfigError("synthetic_gap", "must lie in [0, 1)");
}

std::pair<Dataset, Dataset> make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Rng root(seed);
  Rng train_rng = root.fork(2);
  Rng test_rng = root.fork(3);
  Dataset train = render(spec, spec.train_count, 0, train_rng);
  Dataset test = render(spec, spec.test_count, static_cast<std::uint64_t>(spec.train_count), test_rng);
  return {std::move(train), std::move(test)};
}

}  // namespace cowmask
