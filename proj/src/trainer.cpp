#include "cowmask/trainer.hpp"

#include <cmath>
#include <numeric>

#include "cowmask/error.hpp"
#include "cowmask/run_config.hpp"

namespace cowmask {

namespace {

enum Stream : std::uint64_t { kInit = 11, kSplit = 12, kSupervised = 13, kUnsupervised = 14 };

std::vector<std::uint64_t> rng_words(const Rng& rng) {
  const RngState s = rng.state();
  return {s.seed, s.position};
}

Rng rng_from(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.integers.find(key);
  if (it == ckpt.integers.end() || it->second.size() != 2)
    throw IntegrityError("checkpoint missing " + key);
  return Rng(it->second[0], it->second[1]);
}

const std::vector<std::uint64_t>& integers_at(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.integers.find(key);
  if (it == ckpt.integers.end()) throw IntegrityError("checkpoint missing " + key);
  return it->second;
}

}  // namespace

std::string EpochMetrics::to_json_line() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["sup_loss"] = sup_loss;
  j["unsup_loss"] = unsup_loss;
  j["gate_rate"] = gate_rate;
  j["teacher_err"] = teacher_err;
  j["student_err"] = student_err;
  j["lr"] = lr;
  return j.dump();
}

Trainer::Trainer(const TrainConfig& cfg, const Dataset& train, const Dataset& test) : cfg_(cfg) {
  cfg_.validate();
  train.validate();
  test.validate();
  if (train.channels != test.channels || train.height != test.height || train.width != test.width)
    throw ShapeError("train and test images differ in shape");

  const ImageBatch raw_train = to_unit_range(train);
  stats_ = fit_normalization(raw_train);
  train_ = normalize(raw_train, stats_);
  test_ = normalize(to_unit_range(test), stats_);
  unlabeled_pool_ = train_;
  std::fill(unlabeled_pool_.labels.begin(), unlabeled_pool_.labels.end(), kUnlabeled);

  const Rng root(cfg_.seed);
  Rng split_rng = root.fork(kSplit);
  split_ = stratified_split(train.labels, train.num_classes,
                            SplitSpec{cfg_.n_labeled, cfg_.class_balanced}, split_rng);

  nn::NetSpec spec;
  spec.channels = train.channels;
  spec.height = train.height;
  spec.width = train.width;
  spec.conv1 = cfg_.conv1;
  spec.conv2 = cfg_.conv2;
  spec.hidden = cfg_.hidden;
  spec.classes = train.num_classes;
  Rng init_rng = root.fork(kInit);
  ts_ = nn::TeacherStudent(nn::Network(spec, init_rng), cfg_.alpha);
  sgd_ = nn::Sgd(cfg_.sgd());

  sup_rng_ = root.fork(kSupervised);
  unsup_rng_ = root.fork(kUnsupervised);
  labeled_order_ = split_.labeled;
  shuffle(labeled_order_, sup_rng_);
}

int Trainer::steps_per_epoch() const noexcept {
  return std::max(1, train_.n / cfg_.batch_size);
}

ImageBatch Trainer::next_labeled_batch() {
  const int m = std::min<int>(cfg_.batch_size, static_cast<int>(labeled_order_.size()));
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(m));
  while (static_cast<int>(idx.size()) < m) {
    if (labeled_cursor_ == labeled_order_.size()) {
      shuffle(labeled_order_, sup_rng_);
      labeled_cursor_ = 0;
    }
    idx.push_back(labeled_order_[labeled_cursor_++]);
  }
  return train_.gather(idx);
}

StepResult Trainer::step(const ImageBatch& labeled, const ImageBatch& unlabeled, double lr) {
  const AugPolicy policy = cfg_.augmentation();
  nn::Network& student = ts_.student;
  student.zero_grad();

  const ImageBatch aug = weak_augment(labeled, policy, sup_rng_);
  const LossTerm sup = supervised_loss(student.forward(aug), aug.labels);
  student.backward(sup.grad);

  StepResult r;
  r.sup_loss = sup.loss;
  if (cfg_.mode != TrainMode::supervised_only) {
    const MaskConfig masks = cfg_.mask_config(unlabeled.height, unlabeled.width);
    LossTerm u;
    if (is_erasure(cfg_.mode)) {
      u = cowout_loss(unlabeled, ts_, masks, policy, cfg_.psi, unsup_rng_);
    } else {
      std::vector<int> perm(static_cast<std::size_t>(unlabeled.n));
      std::iota(perm.begin(), perm.end(), 0);
      shuffle(perm, unsup_rng_);
      const ImageBatch partner = unlabeled.gather(perm);
      u = cowmix_loss(unlabeled, partner, ts_, masks, policy, cfg_.psi, unsup_rng_);
    }
    r.unsup_loss = u.loss;
    r.gate_rate = u.gate_rate;
    if (cfg_.omega != 0.0) {
      for (double& g : u.grad.data) g *= cfg_.omega;
      student.backward(u.grad);
    }
  }
  r.total_loss = r.sup_loss + cfg_.omega * r.unsup_loss;
  if (!std::isfinite(r.sup_loss) || !std::isfinite(r.unsup_loss))
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch_ + 1));

  const auto params = student.parameters();
  sgd_.step(params, lr);
  nn::ema_update(ts_);
  return r;
}

EpochMetrics Trainer::train_epoch() {
  if (finished()) throw StateError("training already finished");
  const double lr = sgd_.config().rate_at(epoch_);
  std::vector<int> order(static_cast<std::size_t>(train_.n));
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, unsup_rng_);

  const int steps = steps_per_epoch();
  const int b = std::min(cfg_.batch_size, train_.n);
  EpochMetrics m;
  for (int s = 0; s < steps; ++s) {
    const ImageBatch labeled = next_labeled_batch();
    ImageBatch unlabeled;
    if (cfg_.mode != TrainMode::supervised_only)
      unlabeled = unlabeled_pool_.gather(std::span<const int>(order).subspan(static_cast<std::size_t>(s) * b, b));
    const StepResult r = step(labeled, unlabeled, lr);
    m.sup_loss += r.sup_loss;
    m.unsup_loss += r.unsup_loss;
    m.gate_rate += r.gate_rate;
  }
  ++epoch_;
  m.epoch = epoch_;
  m.sup_loss /= steps;
  m.unsup_loss /= steps;
  m.gate_rate /= steps;
  m.teacher_err = teacher_error();
  m.student_err = student_error();
  m.lr = lr;
  return m;
}

void store_network(Checkpoint& ckpt, const std::string& prefix, const nn::Network& net) {
  const auto params = net.parameters();
  const auto names = net.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Checkpoint::TensorData t;
    t.shape.assign(params[i]->shape.begin(), params[i]->shape.end());
    t.values = params[i]->value;
    ckpt.tensors[prefix + "." + names[i]] = std::move(t);
  }
}

void load_network(const Checkpoint& ckpt, const std::string& prefix, nn::Network& net) {
  const auto params = net.parameters();
  const auto names = net.parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string key = prefix + "." + names[i];
    const auto it = ckpt.tensors.find(key);
    if (it == ckpt.tensors.end()) throw IntegrityError("checkpoint missing tensor " + key);
    const std::vector<std::uint64_t> shape(params[i]->shape.begin(), params[i]->shape.end());
    if (it->second.shape != shape) throw IntegrityError("checkpoint tensor " + key + " has wrong shape");
    params[i]->value = it->second.values;
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  store_network(ckpt, "student", ts_.student);
  store_network(ckpt, "teacher", ts_.teacher);
  const auto names = ts_.student.parameter_names();
  const auto params = ts_.student.parameters();
  const auto& vel = sgd_.velocities();
  for (std::size_t i = 0; i < names.size(); ++i) {
    Checkpoint::TensorData t;
    t.shape.assign(params[i]->shape.begin(), params[i]->shape.end());
    t.values = vel.empty() ? std::vector<double>(params[i]->size(), 0.0) : vel[i];
    ckpt.tensors["velocity." + names[i]] = std::move(t);
  }
  ckpt.integers["epoch"] = {static_cast<std::uint64_t>(epoch_)};
  ckpt.integers["rng.supervised"] = rng_words(sup_rng_);
  ckpt.integers["rng.unsupervised"] = rng_words(unsup_rng_);
  ckpt.integers["labeled_order"].assign(labeled_order_.begin(), labeled_order_.end());
  ckpt.integers["labeled_cursor"] = {static_cast<std::uint64_t>(labeled_cursor_)};
  ckpt.texts["train_config"] = to_json(cfg_).dump();
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  const auto cfg_it = ckpt.texts.find("train_config");
  if (cfg_it == ckpt.texts.end()) throw IntegrityError("checkpoint missing train_config");
  if (cfg_it->second != to_json(cfg_).dump())
    throw IntegrityError("checkpoint was written by a run with a different configuration");

  load_network(ckpt, "student", ts_.student);
  load_network(ckpt, "teacher", ts_.teacher);
  const auto names = ts_.student.parameter_names();
  auto& vel = sgd_.velocities();
  vel.clear();
  for (const auto& name : names) {
    const auto it = ckpt.tensors.find("velocity." + name);
    if (it == ckpt.tensors.end()) throw IntegrityError("checkpoint missing velocity for " + name);
    vel.push_back(it->second.values);
  }

  const auto& epoch = integers_at(ckpt, "epoch");
  const auto& order = integers_at(ckpt, "labeled_order");
  const auto& cursor = integers_at(ckpt, "labeled_cursor");
  if (epoch.size() != 1 || cursor.size() != 1 || order.size() != labeled_order_.size() ||
      cursor[0] > order.size())
    throw IntegrityError("checkpoint trainer state is malformed");
  epoch_ = static_cast<int>(epoch[0]);
  labeled_order_.assign(order.begin(), order.end());
  labeled_cursor_ = static_cast<std::size_t>(cursor[0]);
  sup_rng_ = rng_from(ckpt, "rng.supervised");
  unsup_rng_ = rng_from(ckpt, "rng.unsupervised");
}

}  // namespace cowmask
