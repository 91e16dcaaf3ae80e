#pragma once

#include <string>
#include <vector>

#include "cowmask/checkpoint.hpp"
#include "cowmask/dataset.hpp"
#include "cowmask/ssl.hpp"
#include "cowmask/tinynet.hpp"

namespace cowmask {

struct EpochMetrics {
  int epoch = 0;
  double sup_loss = 0.0;
  double unsup_loss = 0.0;
  double gate_rate = 0.0;
  double teacher_err = 0.0;
  double student_err = 0.0;
  double lr = 0.0;

  /// One JSON object, keys in the order above, doubles in shortest
  /// round-trip form.
  std::string to_json_line() const;
};

struct StepResult {
  double sup_loss = 0.0;
  double unsup_loss = 0.0;
  /// sup_loss + omega * unsup_loss.
  double total_loss = 0.0;
  double gate_rate = 0.0;
};

/// Mean Teacher training over one labeled stream and one unlabeled stream.
///
/// Every step: a weakly augmented labeled batch gives the cross-entropy term;
/// the unlabeled batch gives the erasure or mixing consistency term (mixing
/// pairs each batch with a shuffled copy of itself); the student takes one
/// SGD step on sup + omega * unsup and the teacher is then moved toward the
/// student by ema_update. An epoch is floor(N / batch_size) steps over a
/// fresh permutation of all N training samples.
///
/// Labeled sampling and unsupervised sampling draw from separate RNG streams,
/// so with omega = 0 every mode follows the supervised-only trajectory.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const Dataset& train, const Dataset& test);

  const TrainConfig& config() const noexcept { return cfg_; }
  int epochs_done() const noexcept { return epoch_; }
  bool finished() const noexcept { return epoch_ >= cfg_.epochs; }
  int steps_per_epoch() const noexcept;

  nn::TeacherStudent& models() noexcept { return ts_; }
  const nn::TeacherStudent& models() const noexcept { return ts_; }
  const Split& split() const noexcept { return split_; }
  const ImageBatch& train_set() const noexcept { return train_; }
  const ImageBatch& test_set() const noexcept { return test_; }
  const NormStats& norm_stats() const noexcept { return stats_; }

  /// Runs the next epoch and evaluates both networks on the test set.
  /// Throws NumericError if a loss becomes non-finite.
  EpochMetrics train_epoch();

  /// One optimisation step on the given batches (exposed for tests).
  StepResult step(const ImageBatch& labeled, const ImageBatch& unlabeled, double lr);

  double teacher_error() const { return evaluate(ts_.teacher, test_); }
  double student_error() const { return evaluate(ts_.student, test_); }

  /// Complete state between epochs: networks, optimizer velocities, RNG
  /// streams, labeled-stream cursor, epoch count and the config.
  Checkpoint checkpoint() const;
  /// Throws IntegrityError if the checkpoint does not match this trainer's
  /// architecture or config.
  void restore(const Checkpoint& ckpt);

 private:
  ImageBatch next_labeled_batch();

  TrainConfig cfg_;
  NormStats stats_;
  ImageBatch train_;
  ImageBatch unlabeled_pool_;
  ImageBatch test_;
  Split split_;
  nn::TeacherStudent ts_;
  nn::Sgd sgd_;
  Rng sup_rng_;
  Rng unsup_rng_;
  std::vector<int> labeled_order_;
  std::size_t labeled_cursor_ = 0;
  int epoch_ = 0;
};

/// Checkpoint of network weights alone (keys "<prefix>.<param>").
void store_network(Checkpoint& ckpt, const std::string& prefix, const nn::Network& net);
void load_network(const Checkpoint& ckpt, const std::string& prefix, nn::Network& net);

}  // namespace cowmask
