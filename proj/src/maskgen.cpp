#include "cowmask/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

#include "cowmask/error.hpp"
#include "cowmask/gaussian_filter.hpp"
#include "cowmask/special.hpp"

namespace cowmask {

namespace {

constexpr double kErfArgLimit = 1.0 - 1e-7;

void check_size(int height, int width) {
  if (height < 1) throw ConfigError("height", "mask height must be at least 1");
  if (width < 1) throw ConfigError("width", "mask width must be at least 1");
}

void check_range(const char* lo_name, double lo, const char* hi_name, double hi, double floor,
                 double ceil) {
  if (!(lo >= floor && lo <= ceil)) throw ConfigError(lo_name, "out of range");
  if (!(hi >= floor && hi <= ceil)) throw ConfigError(hi_name, "out of range");
  if (lo > hi) throw ConfigError(lo_name, std::string("must not exceed ") + hi_name);
}

// Uniform in [lo, hi]; one draw regardless of whether the range is degenerate.
double draw_in(Rng& rng, double lo, double hi) {
  const double u = rng.uniform();
  return lo == hi ? lo : lo + (hi - lo) * u;
}

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

}  // namespace

std::string_view to_string(MaskKind kind) noexcept {
  switch (kind) {
    case MaskKind::cow: return "cow";
    case MaskKind::box: return "box";
    case MaskKind::constant: return "constant";
  }
  return "?";
}

MaskKind parse_mask_kind(std::string_view name) {
  if (name == "cow") return MaskKind::cow;
  if (name == "box") return MaskKind::box;
  if (name == "constant") return MaskKind::constant;
  throw ConfigError("kind", "unknown mask kind '" + std::string(name) + "'");
}

void CowMaskConfig::validate() const {
  if (!(sigma_min > 0.0) || !std::isfinite(sigma_min))
    throw ConfigError("sigma_min", "must be positive");
  if (!(sigma_max >= sigma_min) || !std::isfinite(sigma_max))
    throw ConfigError("sigma_max", "must be finite and >= sigma_min");
  check_range("p_min", p_min, "p_max", p_max, 0.0, 1.0);
  check_size(height, width);
}

void BoxMaskConfig::validate() const {
  check_range("area_min", area_min, "area_max", area_max, 0.0, 1.0);
  check_size(height, width);
}

void ConstantMaskConfig::validate() const {
  if (!(beta_param > 0.0) || !std::isfinite(beta_param))
    throw ConfigError("beta_param", "Beta parameter must be positive");
  check_size(height, width);
}

double Mask::mean() const {
  double total = 0.0;
  for (double v : plane.values) total += v;
  return plane.values.empty() ? 0.0 : total / static_cast<double>(plane.values.size());
}

double Mask::ones_fraction() const {
  const auto ones = std::count(plane.values.begin(), plane.values.end(), 1.0);
  return plane.values.empty() ? 0.0 : static_cast<double>(ones) / plane.values.size();
}

std::uint64_t cow_mask_draws(const CowMaskConfig& cfg) noexcept {
  return 2 + static_cast<std::uint64_t>(cfg.height) * static_cast<std::uint64_t>(cfg.width);
}

double cow_threshold(double mean, double stddev, double p) {
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  const double arg = std::clamp(2.0 * p - 1.0, -kErfArgLimit, kErfArgLimit);
  return mean + std::numbers::sqrt2 * inverse_erf(arg) * stddev;
}

Mask make_cow_mask(const CowMaskConfig& cfg, Rng& rng) {
  cfg.validate();
  Mask mask;
  mask.kind = MaskKind::cow;

  const double u = rng.uniform();
  mask.sigma = cfg.sigma_min == cfg.sigma_max
                   ? cfg.sigma_min
                   : std::exp(std::log(cfg.sigma_min) +
                              u * (std::log(cfg.sigma_max) - std::log(cfg.sigma_min)));
  mask.proportion = draw_in(rng, cfg.p_min, cfg.p_max);

  Plane noise(cfg.height, cfg.width);
  rng.fill_normal(noise.values);
  Plane filtered = gaussian_filter_2d(noise, mask.sigma);

  const double n = static_cast<double>(filtered.size());
  double mean = 0.0;
  for (double v : filtered.values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : filtered.values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / n);

  const double tau = cow_threshold(mean, stddev, mask.proportion);
  for (double& v : filtered.values) v = v <= tau ? 1.0 : 0.0;
  mask.plane = std::move(filtered);
  return mask;
}

Mask make_box_mask(const BoxMaskConfig& cfg, Rng& rng) {
  cfg.validate();
  const double area_frac = draw_in(rng, cfg.area_min, cfg.area_max);
  const double log_ratio = rng.uniform(std::log(0.5), std::log(2.0));
  const double u_row = rng.uniform();
  const double u_col = rng.uniform();

  Mask mask;
  mask.kind = MaskKind::box;
  mask.proportion = area_frac;
  mask.plane = Plane(cfg.height, cfg.width, 1.0);
  if (area_frac <= 0.0) return mask;

  // Box height/width = ratio; shrink along an axis that overflows while
  // preserving area where the other axis has room.
  const double area = area_frac * cfg.height * cfg.width;
  const double ratio = std::exp(log_ratio);
  double bh = std::sqrt(area * ratio);
  double bw = std::sqrt(area / ratio);
  if (bh > cfg.height) {
    bh = cfg.height;
    bw = area / bh;
  }
  if (bw > cfg.width) {
    bw = cfg.width;
    bh = std::min<double>(cfg.height, area / bw);
  }
  const int box_h = std::clamp(round_half_up(bh), 1, cfg.height);
  const int box_w = std::clamp(round_half_up(bw), 1, cfg.width);
  const int top = static_cast<int>(u_row * (cfg.height - box_h + 1));
  const int left = static_cast<int>(u_col * (cfg.width - box_w + 1));
  for (int y = top; y < top + box_h; ++y)
    for (int x = left; x < left + box_w; ++x) mask.plane.at(y, x) = 0.0;
  return mask;
}

Mask make_constant_mask(const ConstantMaskConfig& cfg, Rng& rng) {
  cfg.validate();
  Mask mask;
  mask.kind = MaskKind::constant;
  mask.proportion = rng.beta(cfg.beta_param, cfg.beta_param);
  mask.plane = Plane(cfg.height, cfg.width, mask.proportion);
  return mask;
}

Mask make_mask(const MaskConfig& cfg, Rng& rng) {
  return std::visit(
      [&rng](const auto& c) -> Mask {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, CowMaskConfig>) return make_cow_mask(c, rng);
        else if constexpr (std::is_same_v<T, BoxMaskConfig>) return make_box_mask(c, rng);
        else return make_constant_mask(c, rng);
      },
      cfg);
}

std::vector<Mask> make_batch(const MaskConfig& cfg, int n, Rng& rng, int workers) {
  if (n < 1) throw ConfigError("n", "batch size must be at least 1");
  std::visit([](const auto& c) { c.validate(); }, cfg);
  std::vector<Mask> masks(static_cast<std::size_t>(n));

  std::uint64_t stride = 0;
  if (const auto* cow = std::get_if<CowMaskConfig>(&cfg)) stride = cow_mask_draws(*cow);
  else if (std::holds_alternative<BoxMaskConfig>(cfg)) stride = kBoxMaskDraws;

  if (stride == 0) {
    // Rejection-sampled draws: sequential only.
    for (auto& m : masks) m = make_mask(cfg, rng);
    return masks;
  }

  const RngState start = rng.state();
  auto run = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      Rng local(start.seed, start.position + static_cast<std::uint64_t>(i) * stride);
      masks[static_cast<std::size_t>(i)] = make_mask(cfg, local);
    }
  };

  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n);
  if (workers == 1) {
    run(0, n);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      const int begin = static_cast<int>(static_cast<long long>(n) * w / workers);
      const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
      pool.emplace_back(run, begin, end);
    }
  }
  rng.advance(static_cast<std::uint64_t>(n) * stride);
  return masks;
}

}  // namespace cowmask
