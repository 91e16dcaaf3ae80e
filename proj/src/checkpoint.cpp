#include "cowmask/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cowmask/error.hpp"

namespace cowmask {

namespace {

constexpr char kMagic[8] = {'C', 'W', 'M', 'K', 'C', 'K', 'P', 'T'};
enum : std::uint8_t { kTensor = 1, kIntegers = 2, kText = 3 };

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw IntegrityError("checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::uint64_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size() + ckpt.integers.size() + ckpt.texts.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    std::uint64_t expected = 1;
    for (auto d : t.shape) expected *= d;
    if (expected != t.values.size()) throw ShapeError("checkpoint tensor '" + name + "' shape mismatch");
    w.u8(kTensor);
    w.str32(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  for (const auto& [name, values] : ckpt.integers) {
    w.u8(kIntegers);
    w.str32(name);
    w.u64(values.size());
    for (auto v : values) w.u64(v);
  }
  for (const auto& [name, text] : ckpt.texts) {
    w.u8(kText);
    w.str32(name);
    w.u64(text.size());
    w.bytes(text.data(), text.size());
  }
  auto& buf = w.buffer();
  const std::uint32_t crc = crc_of(buf.data(), buf.size());
  w.u32(crc);
  return std::move(buf);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 12) throw IntegrityError("checkpoint truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw IntegrityError("not a checkpoint file (bad magic)");

  const std::size_t body = bytes.size() - 4;
  Reader tail(bytes.data() + body, 4);
  if (tail.u32() != crc_of(bytes.data(), body)) throw IntegrityError("checkpoint CRC mismatch");

  Reader r(bytes.data() + sizeof kMagic, body - sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IntegrityError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::uint8_t kind = r.u8();
    const std::string name = r.str(r.u32());
    switch (kind) {
      case kTensor: {
        Checkpoint::TensorData t;
        const std::uint32_t ndim = r.u32();
        std::uint64_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
          t.shape.push_back(r.u64());
          n *= t.shape.back();
        }
        if (n > r.remaining() / 8) throw IntegrityError("checkpoint truncated");
        t.values.resize(n);
        for (double& v : t.values) v = r.f64();
        ckpt.tensors.emplace(name, std::move(t));
        break;
      }
      case kIntegers: {
        const std::uint64_t n = r.u64();
        if (n > r.remaining() / 8) throw IntegrityError("checkpoint truncated");
        std::vector<std::uint64_t> values(n);
        for (auto& v : values) v = r.u64();
        ckpt.integers.emplace(name, std::move(values));
        break;
      }
      case kText:
        ckpt.texts.emplace(name, r.str(r.u64()));
        break;
      default:
        throw IntegrityError("unknown checkpoint section kind");
    }
  }
  if (r.remaining() != 0) throw IntegrityError("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(DataErrorKind::io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace cowmask
