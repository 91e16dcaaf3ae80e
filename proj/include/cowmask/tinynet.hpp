#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cowmask/imageops.hpp"
#include "cowmask/rng.hpp"

namespace cowmask::nn {

/// Parameter tensor: values plus an accumulated gradient of the same shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  std::size_t size() const noexcept { return value.size(); }
};

/// N x C x H x W activations. Class scores and probabilities use C = K and
/// H = W = 1.
struct Activations {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Activations() = default;
  Activations(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

  std::size_t per_sample() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  std::span<double> sample(int i) { return {data.data() + i * per_sample(), per_sample()}; }
  std::span<const double> sample(int i) const {
    return {data.data() + i * per_sample(), per_sample()};
  }
  bool same_shape(const Activations& o) const noexcept {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

Activations to_activations(const ImageBatch& batch);

/// 3x3 convolution, stride 1, zero padding 1. Weight shape {out, in, 3, 3}.
class Conv3x3 {
 public:
  Conv3x3(int in_channels, int out_channels);

  Activations forward(const Activations& in) const;
  Activations forward_train(const Activations& in);
  Activations backward(const Activations& dout);

  Tensor weight;
  Tensor bias;

 private:
  Activations run(const Activations& in, std::vector<double>* cols_cache) const;

  int in_channels_;
  int out_channels_;
  int cached_h_ = 0;
  int cached_w_ = 0;
  int cached_n_ = -1;
  std::vector<double> cols_;
};

class Relu {
 public:
  Activations forward(const Activations& in) const;
  Activations forward_train(const Activations& in);
  Activations backward(const Activations& dout);

 private:
  std::vector<char> active_;
  bool cached_ = false;
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Ties resolve to the first maximum in row-major window order.
class MaxPool2 {
 public:
  Activations forward(const Activations& in) const;
  Activations forward_train(const Activations& in);
  Activations backward(const Activations& dout);

 private:
  Activations run(const Activations& in, std::vector<std::size_t>* argmax) const;

  std::vector<std::size_t> argmax_;
  int in_c_ = 0;
  int in_h_ = 0;
  int in_w_ = 0;
  int cached_n_ = -1;
};

/// Fully connected layer over the flattened C x H x W input. Weight shape
/// {out, in}.
class Dense {
 public:
  Dense(int in_features, int out_features);

  Activations forward(const Activations& in) const;
  Activations forward_train(const Activations& in);
  Activations backward(const Activations& dout);

  Tensor weight;
  Tensor bias;

 private:
  int in_features_;
  int out_features_;
  Activations input_;
  bool cached_ = false;
  int in_c_ = 0, in_h_ = 0, in_w_ = 0;
};

/// Row-wise softmax over the channel axis.
class Softmax {
 public:
  Activations forward(const Activations& in) const;
  Activations forward_train(const Activations& in);
  Activations backward(const Activations& dout);

 private:
  Activations output_;
  bool cached_ = false;
};

using Layer = std::variant<Conv3x3, Relu, MaxPool2, Dense, Softmax>;

/// conv3x3(conv1)-relu-pool, conv3x3(conv2)-relu-pool, dense(hidden)-relu,
/// dense(classes)-softmax. Height and width must be multiples of 4.
struct NetSpec {
  int channels = 1;
  int height = 32;
  int width = 32;
  int conv1 = 32;
  int conv2 = 64;
  int hidden = 128;
  int classes = 10;

  void validate() const;
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

class Network {
 public:
  Network() = default;
  /// He-uniform weights, zero biases.
  Network(const NetSpec& spec, Rng& init);

  const NetSpec& spec() const noexcept { return spec_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  /// Forward pass that records what backward() needs. Returns N x K
  /// probabilities.
  Activations forward(const ImageBatch& batch);
  /// Forward pass without caching; safe on a shared const network.
  Activations predict(const ImageBatch& batch) const;

  /// Accumulates parameter gradients for the loss whose gradient with
  /// respect to the last forward()'s probabilities is `dprobs`.
  /// Throws StateError if forward() has not been called.
  void backward(const Activations& dprobs);

  void zero_grad();
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  /// Names parallel to parameters(), e.g. "conv1.weight".
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_bytes() const;

 private:
  NetSpec spec_;
  std::vector<Layer> layers_;
  bool has_forward_ = false;
  int forward_n_ = 0;
};

/// Learning-rate milestone: from `epoch` on, the rate is multiplied by `factor`.
struct LrMilestone {
  int epoch = 0;
  double factor = 1.0;
  friend bool operator==(const LrMilestone&, const LrMilestone&) = default;
};

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool nesterov = true;
  std::vector<LrMilestone> schedule;

  void validate() const;
  /// Base rate times the factors of every milestone with epoch <= `epoch`.
  double rate_at(int epoch) const;
};

/// SGD with (Nesterov) momentum and L2 weight decay folded into the gradient:
///   g <- grad + wd * theta;  v <- mu * v + g;
///   theta <- theta - lr * (g + mu * v)   (Nesterov)
///   theta <- theta - lr * v              (classical)
class Sgd {
 public:
  Sgd() = default;
  explicit Sgd(SgdConfig config);

  const SgdConfig& config() const noexcept { return config_; }
  void step(std::span<Tensor* const> params, double learning_rate);

  std::vector<std::vector<double>>& velocities() noexcept { return velocity_; }
  const std::vector<std::vector<double>>& velocities() const noexcept { return velocity_; }

 private:
  SgdConfig config_;
  std::vector<std::vector<double>> velocity_;
};

/// Student trained by gradient descent; teacher tracks an exponential moving
/// average of its weights and is never updated by gradients.
struct TeacherStudent {
  Network student;
  Network teacher;
  double alpha = 0.99;

  TeacherStudent() = default;
  TeacherStudent(Network net, double alpha_);
};

/// teacher <- alpha * teacher + (1 - alpha) * student, parameter-wise.
void ema_update(Network& teacher, const Network& student, double alpha);
inline void ema_update(TeacherStudent& ts) { ema_update(ts.teacher, ts.student, ts.alpha); }

}  // namespace cowmask::nn
