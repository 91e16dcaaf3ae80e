#include "cowmask/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cowmask/error.hpp"

namespace cowmask {

namespace {

double max_of(std::span<const double> row) { return *std::max_element(row.begin(), row.end()); }

void check_same(const nn::Activations& a, const nn::Activations& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": prediction shapes differ");
}

}  // namespace

std::string_view to_string(TrainMode mode) noexcept {
  switch (mode) {
    case TrainMode::supervised_only: return "supervised_only";
    case TrainMode::cowout: return "cowout";
    case TrainMode::cowmix: return "cowmix";
    case TrainMode::randerase: return "randerase";
    case TrainMode::cutmix: return "cutmix";
    case TrainMode::ict: return "ict";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view name) {
  for (TrainMode m : {TrainMode::supervised_only, TrainMode::cowout, TrainMode::cowmix,
                      TrainMode::randerase, TrainMode::cutmix, TrainMode::ict})
    if (name == to_string(m)) return m;
  throw ConfigError("mode", "unknown mode '" + std::string(name) + "'");
}

bool is_erasure(TrainMode mode) noexcept {
  return mode == TrainMode::cowout || mode == TrainMode::randerase;
}

bool is_mixing(TrainMode mode) noexcept {
  return mode == TrainMode::cowmix || mode == TrainMode::cutmix || mode == TrainMode::ict;
}

TrainConfig TrainConfig::defaults_for(TrainMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  if (is_mixing(mode)) {
    cfg.omega = 30.0;
    cfg.alpha = 0.97;
    cfg.p_min = 0.2;
    cfg.p_max = 0.8;
  } else {
    cfg.omega = 1.0;
    cfg.alpha = 0.99;
    cfg.p_min = 0.25;
    cfg.p_max = 1.0;
  }
  return cfg;
}

void TrainConfig::validate() const {
  if (!(omega >= 0.0) || !std::isfinite(omega)) throw ConfigError("omega", "must be >= 0");
  if (!(psi >= 0.0 && psi <= 1.0)) throw ConfigError("psi", "must lie in [0, 1]");
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha", "must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs", "must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (n_labeled < 1) throw ConfigError("labels", "must be at least 1");
  if (!(ict_beta > 0.0)) throw ConfigError("ict_beta", "must be positive");
  if (conv1 < 1 || conv2 < 1 || hidden < 1) throw ConfigError("width", "layer widths must be positive");
  if (!(sigma_min > 0.0)) throw ConfigError("sigma", "lower bound must be positive");
  if (!(sigma_max >= sigma_min)) throw ConfigError("sigma", "upper bound below lower bound");
  if (!(p_min >= 0.0 && p_max <= 1.0 && p_min <= p_max))
    throw ConfigError("p", "need 0 <= lo <= hi <= 1");
  augmentation().validate();
  sgd().validate();
}

std::vector<nn::LrMilestone> TrainConfig::resolved_schedule() const {
  if (!lr_schedule.empty()) return lr_schedule;
  return {{static_cast<int>(std::lround(0.4 * epochs)), 0.2},
          {static_cast<int>(std::lround(0.8 * epochs)), 0.2}};
}

nn::SgdConfig TrainConfig::sgd() const {
  nn::SgdConfig s;
  s.learning_rate = learning_rate;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  s.nesterov = true;
  s.schedule = resolved_schedule();
  return s;
}

MaskConfig TrainConfig::mask_config(int height, int width) const {
  switch (mode) {
    case TrainMode::randerase:
    case TrainMode::cutmix:
      return BoxMaskConfig{1.0 - p_max, 1.0 - p_min, height, width};
    case TrainMode::ict:
      return ConstantMaskConfig{ict_beta, height, width};
    default:
      return CowMaskConfig{sigma_min, sigma_max, p_min, p_max, height, width};
  }
}

// --- Split ---------------------------------------------------------------------

std::vector<int> apportion(std::span<const int> class_counts, int n_labeled) {
  const long long total = std::accumulate(class_counts.begin(), class_counts.end(), 0LL);
  std::vector<int> quota(class_counts.size());
  std::vector<long long> remainder(class_counts.size());
  long long assigned = 0;
  for (std::size_t k = 0; k < class_counts.size(); ++k) {
    const long long scaled = static_cast<long long>(n_labeled) * class_counts[k];
    quota[k] = static_cast<int>(scaled / total);
    remainder[k] = scaled % total;
    assigned += quota[k];
  }
  std::vector<std::size_t> order(class_counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n_labeled; ++i, ++assigned) ++quota[order[i]];
  return quota;
}

Split stratified_split(std::span<const int> labels, int num_classes, const SplitSpec& spec, Rng& rng) {
  const int n = static_cast<int>(labels.size());
  if (spec.n_labeled > n) throw ConfigError("labels", "more labeled samples requested than available");
  if (spec.n_labeled < num_classes)
    throw ConfigError("labels", "need at least one labeled sample per class");

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l < 0 || l >= num_classes) throw ConfigError("labels", "label outside class range");
    by_class[static_cast<std::size_t>(l)].push_back(i);
  }
  for (const auto& members : by_class)
    if (members.empty()) throw ConfigError("labels", "every class needs at least one sample");

  Split split;
  if (spec.class_balanced) {
    std::vector<int> counts;
    for (const auto& members : by_class) counts.push_back(static_cast<int>(members.size()));
    const std::vector<int> quota = apportion(counts, spec.n_labeled);
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      std::vector<int> members = by_class[k];
      shuffle(members, rng);
      split.labeled.insert(split.labeled.end(), members.begin(), members.begin() + quota[k]);
    }
  } else {
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    shuffle(all, rng);
    split.labeled.assign(all.begin(), all.begin() + spec.n_labeled);
  }
  std::sort(split.labeled.begin(), split.labeled.end());
  split.unlabeled.resize(static_cast<std::size_t>(n));
  std::iota(split.unlabeled.begin(), split.unlabeled.end(), 0);
  return split;
}

// --- Losses --------------------------------------------------------------------

LossTerm supervised_loss(const nn::Activations& probs, std::span<const int> targets) {
  if (targets.size() != static_cast<std::size_t>(probs.n))
    throw ShapeError("supervised_loss: target count mismatch");
  LossTerm out;
  out.grad = nn::Activations(probs.n, probs.c, probs.h, probs.w);
  const double inv_n = 1.0 / probs.n;
  for (int i = 0; i < probs.n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= probs.c)
      throw ConfigError("target", "class id " + std::to_string(t) + " out of range");
    const double p = probs.sample(i)[static_cast<std::size_t>(t)];
    if (!(p <= kLogClamp)) {
      out.loss -= std::log(p);
      out.grad.sample(i)[static_cast<std::size_t>(t)] = -inv_n / p;
    } else {
      out.loss -= std::log(kLogClamp);
    }
  }
  out.loss *= inv_n;
  return out;
}

LossTerm erasure_consistency(const nn::Activations& student, const nn::Activations& teacher,
                             double psi) {
  check_same(student, teacher, "erasure_consistency");
  LossTerm out;
  out.grad = nn::Activations(student.n, student.c, student.h, student.w);
  const double inv_n = 1.0 / student.n;
  int open = 0;
  for (int i = 0; i < student.n; ++i) {
    const auto z = teacher.sample(i);
    if (!(max_of(z) >= psi)) continue;
    ++open;
    const auto y = student.sample(i);
    auto g = out.grad.sample(i);
    double d = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double diff = y[k] - z[k];
      d += diff * diff;
      g[k] = 2.0 * diff * inv_n;
    }
    out.loss += d;
  }
  out.loss *= inv_n;
  out.gate_rate = static_cast<double>(open) * inv_n;
  return out;
}

LossTerm mix_consistency(const nn::Activations& student, const nn::Activations& teacher_a,
                         const nn::Activations& teacher_b, std::span<const double> mix_weights,
                         double psi) {
  check_same(student, teacher_a, "mix_consistency");
  check_same(student, teacher_b, "mix_consistency");
  if (mix_weights.size() != static_cast<std::size_t>(student.n))
    throw ShapeError("mix_consistency: one mix weight per pair required");

  const double inv_n = 1.0 / student.n;
  nn::Activations mixed_targets(student.n, student.c, student.h, student.w);
  int open = 0;
  for (int i = 0; i < student.n; ++i) {
    const double p = mix_weights[static_cast<std::size_t>(i)];
    const auto za = teacher_a.sample(i);
    const auto zb = teacher_b.sample(i);
    auto zm = mixed_targets.sample(i);
    for (std::size_t k = 0; k < zm.size(); ++k) zm[k] = za[k] * p + zb[k] * (1.0 - p);
    const double cm = max_of(za) * p + max_of(zb) * (1.0 - p);
    if (cm >= psi) ++open;
  }
  const double q = static_cast<double>(open) * inv_n;

  LossTerm out;
  out.grad = nn::Activations(student.n, student.c, student.h, student.w);
  out.gate_rate = q;
  double total = 0.0;
  for (int i = 0; i < student.n; ++i) {
    const auto y = student.sample(i);
    const auto zm = mixed_targets.sample(i);
    auto g = out.grad.sample(i);
    for (std::size_t k = 0; k < y.size(); ++k) {
      const double diff = y[k] - zm[k];
      total += diff * diff;
      g[k] = 2.0 * q * diff * inv_n;
    }
  }
  out.loss = q * total * inv_n;
  return out;
}

LossTerm erasure_loss_augmented(const ImageBatch& augmented, std::span<const Mask> masks,
                                nn::TeacherStudent& ts, double psi, Rng& noise_rng) {
  const nn::Activations z = ts.teacher.predict(augmented);
  const ImageBatch erased = erase_with_mask(augmented, masks, noise_rng);
  const nn::Activations y = ts.student.forward(erased);
  return erasure_consistency(y, z, psi);
}

LossTerm mix_loss_augmented(const ImageBatch& aug_a, const ImageBatch& aug_b,
                            std::span<const Mask> masks, nn::TeacherStudent& ts, double psi) {
  if (!aug_a.same_shape(aug_b)) throw ShapeError("mix_loss: batches differ in shape");
  const nn::Activations za = ts.teacher.predict(aug_a);
  const nn::Activations zb = ts.teacher.predict(aug_b);
  const MixResult mixed = mix_with_mask(aug_a, aug_b, masks);
  const nn::Activations y = ts.student.forward(mixed.images);
  return mix_consistency(y, za, zb, mixed.mix_weights, psi);
}

LossTerm cowout_loss(const ImageBatch& unlabeled, nn::TeacherStudent& ts, const MaskConfig& masks,
                     const AugPolicy& aug, double psi, Rng& rng) {
  const ImageBatch augmented = weak_augment(unlabeled, aug, rng);
  const std::vector<Mask> m = make_batch(masks, unlabeled.n, rng);
  return erasure_loss_augmented(augmented, m, ts, psi, rng);
}

LossTerm cowmix_loss(const ImageBatch& batch_a, const ImageBatch& batch_b, nn::TeacherStudent& ts,
                     const MaskConfig& masks, const AugPolicy& aug, double psi, Rng& rng) {
  if (!batch_a.same_shape(batch_b)) throw ShapeError("cowmix_loss: batches differ in shape");
  const ImageBatch aug_a = weak_augment(batch_a, aug, rng);
  const ImageBatch aug_b = weak_augment(batch_b, aug, rng);
  const std::vector<Mask> m = make_batch(masks, batch_a.n, rng);
  return mix_loss_augmented(aug_a, aug_b, m, ts, psi);
}

// --- Evaluation ----------------------------------------------------------------

int argmax(std::span<const double> row) {
  int best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  return best;
}

double error_rate(const nn::Activations& probs, std::span<const int> labels) {
  if (probs.n == 0) throw ConfigError("test_set", "cannot evaluate on an empty set");
  if (labels.size() != static_cast<std::size_t>(probs.n))
    throw ShapeError("error_rate: label count mismatch");
  int wrong = 0;
  for (int i = 0; i < probs.n; ++i)
    if (argmax(probs.sample(i)) != labels[static_cast<std::size_t>(i)]) ++wrong;
  return static_cast<double>(wrong) / probs.n;
}

double evaluate(const nn::Network& net, const ImageBatch& test, int chunk) {
  if (test.n == 0) throw ConfigError("test_set", "cannot evaluate on an empty set");
  int wrong = 0;
  std::vector<int> idx;
  for (int start = 0; start < test.n; start += chunk) {
    const int end = std::min(test.n, start + chunk);
    idx.resize(static_cast<std::size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    const ImageBatch part = test.gather(idx);
    const nn::Activations probs = net.predict(part);
    for (int i = 0; i < part.n; ++i)
      if (argmax(probs.sample(i)) != part.labels[static_cast<std::size_t>(i)]) ++wrong;
  }
  return static_cast<double>(wrong) / test.n;
}

}  // namespace cowmask
