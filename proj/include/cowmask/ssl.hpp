#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "cowmask/imageops.hpp"
#include "cowmask/maskgen.hpp"
#include "cowmask/tinynet.hpp"

namespace cowmask {

enum class TrainMode { supervised_only, cowout, cowmix, randerase, cutmix, ict };

std::string_view to_string(TrainMode mode) noexcept;
TrainMode parse_train_mode(std::string_view name);
/// cowout and randerase.
bool is_erasure(TrainMode mode) noexcept;
/// cowmix, cutmix and ict.
bool is_mixing(TrainMode mode) noexcept;

/// Every hyper-parameter of a training run.
///
/// For erasure modes [p_min, p_max] is the proportion of pixels retained;
/// for mixing modes it is the proportion taken from the first image. Box
/// masks (randerase, cutmix) use the complementary area range
/// [1 - p_max, 1 - p_min] for the zeroed rectangle.
struct TrainConfig {
  TrainMode mode = TrainMode::cowmix;
  double omega = 30.0;
  double psi = 0.5;
  double alpha = 0.97;
  double sigma_min = 4.0;
  double sigma_max = 16.0;
  double p_min = 0.2;
  double p_max = 0.8;
  double ict_beta = 1.0;
  int epochs = 20;
  int batch_size = 64;
  int n_labeled = 100;
  bool class_balanced = true;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  /// Empty means: x0.2 at 40% and 80% of the epochs.
  std::vector<nn::LrMilestone> lr_schedule;
  int pad_pixels = 2;
  double flip_prob = 0.5;
  int conv1 = 32;
  int conv2 = 64;
  int hidden = 128;
  std::uint64_t seed = 0;

  /// Mode-specific defaults: erasure uses omega 1, alpha 0.99, p in
  /// (0.25, 1); mixing uses omega 30, alpha 0.97, p in (0.2, 0.8).
  static TrainConfig defaults_for(TrainMode mode);

  void validate() const;
  std::vector<nn::LrMilestone> resolved_schedule() const;
  nn::SgdConfig sgd() const;
  AugPolicy augmentation() const { return {pad_pixels, flip_prob}; }
  /// Mask generator for the unsupervised branch at the given image size.
  MaskConfig mask_config(int height, int width) const;
};

struct SplitSpec {
  int n_labeled = 100;
  bool class_balanced = true;
};

struct Split {
  std::vector<int> labeled;
  std::vector<int> unlabeled;
};

/// Per-class quotas by largest-remainder apportionment of `n_labeled` over
/// the class frequencies; ties go to the lower class id.
std::vector<int> apportion(std::span<const int> class_counts, int n_labeled);

/// Labeled subset with class-proportional counts (each within 1 of the exact
/// share), chosen uniformly within each class and returned sorted. Every
/// sample, labeled or not, is in the unlabeled set.
Split stratified_split(std::span<const int> labels, int num_classes, const SplitSpec& spec, Rng& rng);

/// A scalar loss with its gradient with respect to the student's output
/// probabilities.
struct LossTerm {
  double loss = 0.0;
  nn::Activations grad;
  /// Fraction of samples passing the confidence gate (1 for supervised).
  double gate_rate = 1.0;
};

inline constexpr double kLogClamp = 1e-12;

/// Mean over the batch of -log(max(p[target], 1e-12)).
LossTerm supervised_loss(const nn::Activations& probs, std::span<const int> targets);

/// Erasure consistency: mean over samples of q_i * ||y_i - z_i||^2 with a
/// per-sample gate q_i = [max_k z_i[k] >= psi].
LossTerm erasure_consistency(const nn::Activations& student, const nn::Activations& teacher,
                             double psi);

/// Mixing consistency: z_m = p z_a + (1 - p) z_b and c_m = p c_a + (1 - p) c_b
/// per pair, one batch-level gate q = mean_i [c_m,i >= psi], loss
/// q * mean_i ||y_i - z_m,i||^2.
LossTerm mix_consistency(const nn::Activations& student, const nn::Activations& teacher_a,
                         const nn::Activations& teacher_b, std::span<const double> mix_weights,
                         double psi);

/// Unsupervised erasure term on already weakly-augmented images: teacher
/// targets on `augmented`, student (with caching, ready for backward) on the
/// erased images.
LossTerm erasure_loss_augmented(const ImageBatch& augmented, std::span<const Mask> masks,
                                nn::TeacherStudent& ts, double psi, Rng& noise_rng);

/// Unsupervised mixing term on already weakly-augmented pairs.
LossTerm mix_loss_augmented(const ImageBatch& aug_a, const ImageBatch& aug_b,
                            std::span<const Mask> masks, nn::TeacherStudent& ts, double psi);

/// Full erasure loss: weak augmentation, per-sample masks, noise fill.
LossTerm cowout_loss(const ImageBatch& unlabeled, nn::TeacherStudent& ts, const MaskConfig& masks,
                     const AugPolicy& aug, double psi, Rng& rng);

/// Full mixing loss over pairs (a[i], b[i]).
LossTerm cowmix_loss(const ImageBatch& batch_a, const ImageBatch& batch_b, nn::TeacherStudent& ts,
                     const MaskConfig& masks, const AugPolicy& aug, double psi, Rng& rng);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax(std::span<const double> row);

/// Top-1 error of `probs` against labels.
double error_rate(const nn::Activations& probs, std::span<const int> labels);

/// Top-1 error of `net` on a labeled set, evaluated in chunks.
/// Throws ConfigError on an empty set.
double evaluate(const nn::Network& net, const ImageBatch& test, int chunk = 500);

}  // namespace cowmask
