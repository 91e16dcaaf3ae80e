#include "cowmask/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <string>

#include "cowmask/error.hpp"

namespace cowmask {

namespace {

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io, "cannot open " + path.string());
  return in;
}

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw DataError(DataErrorKind::truncated, path.string() + ": header truncated");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

// Reads exactly `n` bytes in bounded chunks.
void read_exact(std::istream& in, std::uint8_t* dst, std::size_t n, const std::filesystem::path& path) {
  constexpr std::size_t kChunk = 1 << 20;
  while (n > 0) {
    const std::size_t take = std::min(n, kChunk);
    if (!in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(take)))
      throw DataError(DataErrorKind::truncated, path.string() + ": fewer records than declared");
    dst += take;
    n -= take;
  }
}

}  // namespace

void Dataset::validate() const {
  if (pixels.size() != size() * image_bytes())
    throw DataError(DataErrorKind::format, "pixel buffer does not match sample count");
  if (!ids.empty() && ids.size() != size())
    throw DataError(DataErrorKind::format, "id count does not match sample count");
  for (int l : labels)
    if (l < 0 || l >= num_classes)
      throw DataError(DataErrorKind::format, "label " + std::to_string(l) + " outside class range");
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto img_in = open_binary(images);
  if (read_be32(img_in, images) != kIdxImageMagic)
    throw DataError(DataErrorKind::bad_magic, images.string() + ": not an IDX image file");
  const std::uint32_t n_images = read_be32(img_in, images);
  const std::uint32_t rows = read_be32(img_in, images);
  const std::uint32_t cols = read_be32(img_in, images);

  auto lbl_in = open_binary(labels);
  if (read_be32(lbl_in, labels) != kIdxLabelMagic)
    throw DataError(DataErrorKind::bad_magic, labels.string() + ": not an IDX label file");
  const std::uint32_t n_labels = read_be32(lbl_in, labels);
  if (n_images != n_labels)
    throw DataError(DataErrorKind::count_mismatch,
                    "IDX count mismatch: " + std::to_string(n_images) + " images vs " +
                        std::to_string(n_labels) + " labels");

  Dataset d;
  d.channels = 1;
  d.height = static_cast<int>(rows);
  d.width = static_cast<int>(cols);
  d.pixels.resize(static_cast<std::size_t>(n_images) * rows * cols);
  read_exact(img_in, d.pixels.data(), d.pixels.size(), images);

  std::vector<std::uint8_t> raw(n_labels);
  read_exact(lbl_in, raw.data(), raw.size(), labels);
  d.labels.assign(raw.begin(), raw.end());
  d.ids.resize(n_labels);
  for (std::uint32_t i = 0; i < n_labels; ++i) d.ids[i] = i;
  d.num_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  return d;
}

void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::filesystem::path& labels) {
  if (data.channels != 1) throw DataError(DataErrorKind::format, "IDX export needs one channel");
  data.validate();
  std::ofstream img(images, std::ios::binary | std::ios::trunc);
  std::ofstream lbl(labels, std::ios::binary | std::ios::trunc);
  if (!img || !lbl) throw DataError(DataErrorKind::io, "cannot write IDX output");
  write_be32(img, kIdxImageMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(data.height));
  write_be32(img, static_cast<std::uint32_t>(data.width));
  img.write(reinterpret_cast<const char*>(data.pixels.data()),
            static_cast<std::streamsize>(data.pixels.size()));
  write_be32(lbl, kIdxLabelMagic);
  write_be32(lbl, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lbl.put(static_cast<char>(l));
  if (!img || !lbl) throw DataError(DataErrorKind::io, "IDX write failed");
}

Dataset load_cifar_binary(const std::filesystem::path& path) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw DataError(DataErrorKind::io, "cannot stat " + path.string());
  if (bytes % kCifarRecordBytes != 0)
    throw DataError(DataErrorKind::bad_size,
                    path.string() + ": size " + std::to_string(bytes) + " is not a multiple of 3073");
  const std::size_t n = bytes / kCifarRecordBytes;

  Dataset d;
  d.channels = 3;
  d.height = 32;
  d.width = 32;
  d.num_classes = 10;
  d.pixels.resize(n * 3072);
  d.labels.resize(n);
  d.ids.resize(n);
  auto in = open_binary(path);
  std::array<std::uint8_t, kCifarRecordBytes> record{};
  for (std::size_t i = 0; i < n; ++i) {
    read_exact(in, record.data(), record.size(), path);
    d.labels[i] = record[0];
    d.ids[i] = i;
    std::copy(record.begin() + 1, record.end(), d.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3072));
  }
  for (int l : d.labels) d.num_classes = std::max(d.num_classes, l + 1);
  return d;
}

Dataset concat(std::vector<Dataset> parts) {
  if (parts.empty()) return {};
  Dataset out = std::move(parts.front());
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const Dataset& d = parts[p];
    if (d.channels != out.channels || d.height != out.height || d.width != out.width)
      throw DataError(DataErrorKind::format, "cannot concatenate datasets of different geometry");
    const std::uint64_t offset = out.size();
    out.pixels.insert(out.pixels.end(), d.pixels.begin(), d.pixels.end());
    out.labels.insert(out.labels.end(), d.labels.begin(), d.labels.end());
    for (std::size_t i = 0; i < d.size(); ++i) out.ids.push_back(offset + i);
    out.num_classes = std::max(out.num_classes, d.num_classes);
  }
  return out;
}

ImageBatch to_unit_range(const Dataset& data) {
  ImageBatch batch(static_cast<int>(data.size()), data.channels, data.height, data.width);
  for (std::size_t i = 0; i < data.pixels.size(); ++i) batch.data[i] = data.pixels[i] / 255.0;
  batch.labels = data.labels;
  return batch;
}

NormStats channel_stats(const ImageBatch& batch) {
  NormStats s;
  const std::size_t plane = static_cast<std::size_t>(batch.height) * batch.width;
  const double count = static_cast<double>(plane) * batch.n;
  for (int c = 0; c < batch.channels; ++c) {
    double mean = 0.0;
    for (int i = 0; i < batch.n; ++i) {
      const double* p = batch.image(i).data() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) mean += p[k];
    }
    mean /= count;
    double var = 0.0;
    for (int i = 0; i < batch.n; ++i) {
      const double* p = batch.image(i).data() + c * plane;
      for (std::size_t k = 0; k < plane; ++k) var += (p[k] - mean) * (p[k] - mean);
    }
    s.mean.push_back(mean);
    s.stddev.push_back(std::sqrt(var / count));
  }
  return s;
}

NormStats fit_normalization(const ImageBatch& train) {
  if (train.n == 0) throw ConfigError("dataset", "cannot fit normalization on an empty split");
  NormStats s = channel_stats(train);
  for (std::size_t c = 0; c < s.stddev.size(); ++c)
    if (!(s.stddev[c] > 0.0))
      throw ConfigError("dataset", "channel " + std::to_string(c) + " has zero variance");
  return s;
}

ImageBatch normalize(const ImageBatch& batch, const NormStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(batch.channels))
    throw ShapeError("normalization stats do not match channel count");
  ImageBatch out = batch;
  const std::size_t plane = static_cast<std::size_t>(batch.height) * batch.width;
  for (int i = 0; i < batch.n; ++i) {
    auto img = out.image(i);
    for (int c = 0; c < batch.channels; ++c)
      for (std::size_t k = 0; k < plane; ++k) {
        double& v = img[c * plane + k];
        v = (v - stats.mean[c]) / stats.stddev[c];
      }
  }
  return out;
}

}  // namespace cowmask
