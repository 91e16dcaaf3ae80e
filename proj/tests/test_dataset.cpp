#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include <unistd.h>

#include "cowmask/dataset.hpp"
#include "cowmask/error.hpp"

using namespace cowmask;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("cowmask_test_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& f) const { return path / f; }
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<std::uint8_t>(x >> s));
}

// Three 2x3 images and labels {2, 0, 1}.
std::vector<std::uint8_t> idx_images() {
  std::vector<std::uint8_t> v{0, 0, 8, 3};
  be32(v, 3);
  be32(v, 2);
  be32(v, 3);
  for (int i = 0; i < 18; ++i) v.push_back(static_cast<std::uint8_t>(i * 10));
  return v;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t n = 3) {
  std::vector<std::uint8_t> v{0, 0, 8, 1};
  be32(v, n);
  for (std::uint32_t i = 0; i < n; ++i) v.push_back(static_cast<std::uint8_t>((i + 2) % 3));
  return v;
}

DataErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.kind();
  }
  FAIL("expected DataError");
  return DataErrorKind::io;
}

// Fraction of samples whose strongest DFT band matches the label.
double band_accuracy(const Dataset& d, int classes, double gap) {
  const int n = d.height;
  const double hi = 0.35 * n;
  const double width = (hi - 1.0) / classes;
  int right = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::vector<double> power(static_cast<std::size_t>(classes));
    const std::uint8_t* img = d.pixels.data() + i * d.image_bytes();
    for (int u = -n / 2; u < n / 2; ++u)
      for (int v = 0; v < n / 2; ++v) {
        std::complex<double> f;
        for (int y = 0; y < n; ++y)
          for (int x = 0; x < n; ++x)
            f += static_cast<double>(img[y * n + x]) *
                 std::polar(1.0, -2.0 * std::numbers::pi * (u * y + v * x) / n);
        const double r = std::hypot(u, v);
        for (int k = 0; k < classes; ++k) {
          const double lo = 1.0 + k * width;
          if (r >= lo && r < lo + (1.0 - gap) * width) power[static_cast<std::size_t>(k)] += std::norm(f);
        }
      }
    const auto best = std::max_element(power.begin(), power.end()) - power.begin();
    right += best == d.labels[i];
  }
  return static_cast<double>(right) / static_cast<double>(d.size());
}

}  // namespace

TEST_CASE("IDX files load from hand-built bytes") {
  TempDir dir("idx");
  write_bytes(dir / "img", idx_images());
  write_bytes(dir / "lbl", idx_labels());
  const Dataset d = load_idx(dir / "img", dir / "lbl");
  CHECK(d.size() == 3);
  CHECK(d.channels == 1);
  CHECK(d.height == 2);
  CHECK(d.width == 3);
  CHECK(d.num_classes == 3);
  CHECK(d.labels == std::vector<int>{2, 0, 1});
  CHECK(d.pixels[7] == 70);
  CHECK(d.ids == std::vector<std::uint64_t>{0, 1, 2});
}

TEST_CASE("IDX save writes the same bytes") {
  TempDir dir("idx_save");
  write_bytes(dir / "img", idx_images());
  write_bytes(dir / "lbl", idx_labels());
  const Dataset d = load_idx(dir / "img", dir / "lbl");
  save_idx(d, dir / "img2", dir / "lbl2");
  CHECK(read_bytes(dir / "img2") == idx_images());
  CHECK(read_bytes(dir / "lbl2") == idx_labels());
}

TEST_CASE("IDX error kinds") {
  TempDir dir("idx_err");
  write_bytes(dir / "img", idx_images());
  write_bytes(dir / "lbl", idx_labels());

  CHECK(kind_of([&] { load_idx(dir / "missing", dir / "lbl"); }) == DataErrorKind::io);
  CHECK(kind_of([&] { load_idx(dir / "lbl", dir / "lbl"); }) == DataErrorKind::bad_magic);
  CHECK(kind_of([&] { load_idx(dir / "img", dir / "img"); }) == DataErrorKind::bad_magic);

  write_bytes(dir / "lbl4", idx_labels(4));
  CHECK(kind_of([&] { load_idx(dir / "img", dir / "lbl4"); }) == DataErrorKind::count_mismatch);

  auto cut = idx_images();
  cut.resize(cut.size() - 1);
  write_bytes(dir / "cut", cut);
  CHECK(kind_of([&] { load_idx(dir / "cut", dir / "lbl"); }) == DataErrorKind::truncated);

  write_bytes(dir / "short", {0, 0, 8});
  CHECK(kind_of([&] { load_idx(dir / "short", dir / "lbl"); }) == DataErrorKind::truncated);
}

TEST_CASE("CIFAR binary records") {
  TempDir dir("cifar");
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 2; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(7 - r));
    for (int k = 0; k < 3072; ++k) bytes.push_back(static_cast<std::uint8_t>((k / 1024) * 100 + r));
  }
  write_bytes(dir / "b.bin", bytes);
  const Dataset d = load_cifar_binary(dir / "b.bin");
  REQUIRE(d.size() == 2);
  CHECK(d.channels == 3);
  CHECK(d.height == 32);
  CHECK(d.labels == std::vector<int>{7, 6});
  CHECK(d.pixels[0] == 0);
  CHECK(d.pixels[1024] == 100);
  CHECK(d.pixels[3072 + 2048] == 201);
  CHECK(d.num_classes == 10);

  bytes.pop_back();
  write_bytes(dir / "bad.bin", bytes);
  CHECK(kind_of([&] { load_cifar_binary(dir / "bad.bin"); }) == DataErrorKind::bad_size);
  write_bytes(dir / "empty.bin", {});
  CHECK(load_cifar_binary(dir / "empty.bin").size() == 0);
  CHECK(kind_of([&] { load_cifar_binary(dir / "none.bin"); }) == DataErrorKind::io);
}

TEST_CASE("validation and concatenation") {
  Dataset a;
  a.height = 2;
  a.width = 2;
  a.num_classes = 2;
  a.pixels = {1, 2, 3, 4};
  a.labels = {1};
  a.ids = {0};
  CHECK_NOTHROW(a.validate());
  Dataset b = a;
  b.labels = {2};
  CHECK(kind_of([&] { b.validate(); }) == DataErrorKind::format);
  b = a;
  b.pixels.pop_back();
  CHECK(kind_of([&] { b.validate(); }) == DataErrorKind::format);

  const Dataset both = concat({a, a});
  CHECK(both.size() == 2);
  CHECK(both.pixels.size() == 8);
  Dataset c = a;
  c.width = 1;
  c.height = 4;
  CHECK(kind_of([&] { concat({a, c}); }) == DataErrorKind::format);
}

TEST_CASE("unit range and normalization") {
  Dataset d;
  d.channels = 2;
  d.height = 1;
  d.width = 2;
  d.num_classes = 1;
  d.pixels = {0, 255, 51, 51, 255, 0, 102, 102};
  d.labels = {0, 0};
  d.ids = {0, 1};
  const ImageBatch b = to_unit_range(d);
  CHECK(b.data[1] == 1.0);
  CHECK(b.data[2] == doctest::Approx(0.2));

  Dataset flat = d;
  flat.pixels = {0, 255, 51, 51, 255, 0, 51, 51};
  CHECK_THROWS_AS(fit_normalization(to_unit_range(flat)), ConfigError);

  const NormStats s = fit_normalization(b);
  CHECK(s.mean[0] == doctest::Approx(0.5));
  CHECK(s.stddev[0] == doctest::Approx(0.5));
  const ImageBatch z = normalize(b, s);
  const NormStats after = channel_stats(z);
  for (int c = 0; c < 2; ++c) {
    CHECK(std::abs(after.mean[static_cast<std::size_t>(c)]) < 1e-12);
    CHECK(after.stddev[static_cast<std::size_t>(c)] == doctest::Approx(1.0));
  }
  NormStats wrong{{0.0}, {1.0}};
  CHECK_THROWS_AS(normalize(b, wrong), ShapeError);
}

TEST_CASE("synthetic data is deterministic and balanced") {
  SyntheticSpec spec;
  spec.train_count = 200;
  spec.test_count = 40;
  const auto [train, test] = make_synthetic(spec, 7);
  const auto [train2, test2] = make_synthetic(spec, 7);
  const auto [train3, test3] = make_synthetic(spec, 8);
  CHECK(train.pixels == train2.pixels);
  CHECK(test.pixels == test2.pixels);
  CHECK(train.pixels != train3.pixels);
  CHECK(train.pixels != test.pixels);
  CHECK_NOTHROW(train.validate());
  CHECK(train.size() == 200);
  CHECK(test.size() == 40);
  std::vector<int> per(4);
  for (int l : train.labels) ++per[static_cast<std::size_t>(l)];
  CHECK(per == std::vector<int>{50, 50, 50, 50});

  std::set<std::uint64_t> ids(train.ids.begin(), train.ids.end());
  for (std::uint64_t id : test.ids) CHECK(ids.count(id) == 0);
  ids.insert(test.ids.begin(), test.ids.end());
  CHECK(ids.size() == 240);
}

TEST_CASE("synthetic classes are separable by band power without noise and harder with it") {
  SyntheticSpec spec;
  spec.train_count = 200;
  spec.test_count = 4;
  spec.noise_level = 0.0;
  spec.contrast = 0.15;
  const double clean = band_accuracy(make_synthetic(spec, 1).first, spec.classes, spec.band_gap);
  spec.noise_level = 0.45;
  const double noisy = band_accuracy(make_synthetic(spec, 1).first, spec.classes, spec.band_gap);
  MESSAGE("band-power accuracy clean=" << clean << " noisy=" << noisy);
  CHECK(clean > 0.9);
  CHECK(noisy < clean);
  CHECK(noisy > 0.25);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.classes = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.size = 10;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.band_gap = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.noise_level = -0.1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}
