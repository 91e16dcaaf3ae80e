#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cowmask {

/// Versioned binary container of named sections.
///
/// Byte layout (all integers little-endian, doubles IEEE-754 binary64 LE):
///
///   magic    8 bytes  "CWMKCKPT"
///   version  u32      kCheckpointVersion
///   count    u32      number of sections
///   section* kind u8 (1 = f64 tensor, 2 = u64 array, 3 = text)
///            name_len u32, name bytes (UTF-8)
///            tensor: ndim u32, dims u64[ndim], values f64[prod(dims)]
///            u64 array: count u64, values u64[count]
///            text: length u64, bytes
///   crc32    u32      zlib CRC-32 of every preceding byte
///
/// Sections are written in name order within each kind (tensors, then u64
/// arrays, then texts), so equal contents always serialize to equal bytes.
struct Checkpoint {
  struct TensorData {
    std::vector<std::uint64_t> shape;
    std::vector<double> values;
    friend bool operator==(const TensorData&, const TensorData&) = default;
  };

  std::map<std::string, TensorData> tensors;
  std::map<std::string, std::vector<std::uint64_t>> integers;
  std::map<std::string, std::string> texts;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws IntegrityError on bad magic, version mismatch, truncation, or CRC
/// mismatch.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cowmask
