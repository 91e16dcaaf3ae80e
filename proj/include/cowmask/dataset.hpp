#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "cowmask/imageops.hpp"
#include "cowmask/rng.hpp"

namespace cowmask {

/// 8-bit image dataset, N x C x H x W channel-planar.
struct Dataset {
  int channels = 1;
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  /// Provenance id per sample; train and test ids never overlap.
  std::vector<std::uint64_t> ids;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_bytes() const noexcept {
    return static_cast<std::size_t>(channels) * height * width;
  }
  /// Throws DataError(format) if labels fall outside [0, num_classes) or
  /// buffer sizes disagree.
  void validate() const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image file (magic 0x803, big-endian N, rows, cols) and its
/// label file (magic 0x801, big-endian N). Reads exactly the declared
/// records. num_classes is max(label) + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Single-channel datasets only.
void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// CIFAR-10 binary batch: 3073-byte records of one label byte followed by
/// 1024 R, 1024 G and 1024 B bytes. An empty file yields an empty dataset.
Dataset load_cifar_binary(const std::filesystem::path& path);

/// Concatenates datasets of identical geometry.
Dataset concat(std::vector<Dataset> parts);

/// Pixels scaled to [0, 1]; labels copied.
ImageBatch to_unit_range(const Dataset& data);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Per-channel mean and population standard deviation.
NormStats channel_stats(const ImageBatch& batch);
/// channel_stats() that rejects zero-variance channels (ConfigError).
NormStats fit_normalization(const ImageBatch& train);
/// (x - mean[c]) / stddev[c]. Apply the train split's stats to every split.
ImageBatch normalize(const ImageBatch& batch, const NormStats& stats);

/// Desk-scale stand-in for small-image benchmarks.
///
/// Class k is a texture family: every sample is a fresh sum of gratings with
/// random orientation and phase whose radial frequencies (cycles per image)
/// lie in the k-th of `classes` bands spanning [1, 0.35 * size). The top
/// `band_gap` fraction of each band is left empty. The texture is scaled to
/// unit RMS, times `contrast` and an amplitude jitter, plus i.i.d. Gaussian
/// pixel noise of std-dev `noise_level`, on a mid-grey background; values
/// are clipped to [0, 1] and quantized to 8 bits. Labels cycle through the
/// classes.
struct SyntheticSpec {
  int classes = 4;
  int size = 16;
  int train_count = 4000;
  int test_count = 1000;
  double noise_level = 0.3;
  double contrast = 0.2;
  double amplitude_jitter = 0.2;
  double band_gap = 0.3;

  void validate() const;
};

std::pair<Dataset, Dataset> make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace cowmask
