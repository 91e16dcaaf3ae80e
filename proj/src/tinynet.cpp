#include "cowmask/tinynet.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "cowmask/error.hpp"

namespace cowmask::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void he_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  for (double& v : t.value) v = rng.uniform(-limit, limit);
}

// Column matrix of 3x3 patches: row (ci * 3 + ky) * 3 + kx, column y * w + x.
void im2col(const double* src, int channels, int h, int w, double* cols) {
  const int hw = h * w;
  for (int ci = 0; ci < channels; ++ci) {
    const double* plane = src + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = cols + static_cast<std::size_t>((ci * 3 + ky) * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          double* drow = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(drow, drow + w, 0.0);
            continue;
          }
          const double* srow = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            drow[x] = (sx >= 0 && sx < w) ? srow[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int channels, int h, int w, double* dst) {
  const int hw = h * w;
  for (int ci = 0; ci < channels; ++ci) {
    double* plane = dst + static_cast<std::size_t>(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = cols + static_cast<std::size_t>((ci * 3 + ky) * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const double* srow = src + static_cast<std::size_t>(y) * w;
          double* drow = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) drow[sx] += srow[x];
          }
        }
      }
    }
  }
}

void require(bool cached, const char* layer) {
  if (!cached) throw StateError(std::string(layer) + ": backward called before forward");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : shape(std::move(dims)) {
  const std::size_t n =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  value.assign(n, 0.0);
  grad.assign(n, 0.0);
}

Activations to_activations(const ImageBatch& batch) {
  Activations a;
  a.n = batch.n;
  a.c = batch.channels;
  a.h = batch.height;
  a.w = batch.width;
  a.data = batch.data;
  return a;
}

// --- Conv3x3 -----------------------------------------------------------------

Conv3x3::Conv3x3(int in_channels, int out_channels)
    : weight({static_cast<std::size_t>(out_channels), static_cast<std::size_t>(in_channels), 3, 3}),
      bias({static_cast<std::size_t>(out_channels)}),
      in_channels_(in_channels),
      out_channels_(out_channels) {}

Activations Conv3x3::run(const Activations& in, std::vector<double>* cols_cache) const {
  if (in.c != in_channels_) throw ShapeError("conv: input channel mismatch");
  const int hw = in.h * in.w;
  const int k9 = in_channels_ * 9;
  Activations out(in.n, out_channels_, in.h, in.w);

  std::vector<double> local;
  std::vector<double>& cols = cols_cache ? *cols_cache : local;
  cols.resize(static_cast<std::size_t>(cols_cache ? in.n : 1) * k9 * hw);

  const ConstMapMat w(weight.value.data(), out_channels_, k9);
  for (int i = 0; i < in.n; ++i) {
    double* c = cols.data() + (cols_cache ? static_cast<std::size_t>(i) * k9 * hw : 0);
    im2col(in.sample(i).data(), in_channels_, in.h, in.w, c);
    MapMat o(out.sample(i).data(), out_channels_, hw);
    o.noalias() = w * ConstMapMat(c, k9, hw);
    for (int oc = 0; oc < out_channels_; ++oc) o.row(oc).array() += bias.value[oc];
  }
  return out;
}

Activations Conv3x3::forward(const Activations& in) const { return run(in, nullptr); }

Activations Conv3x3::forward_train(const Activations& in) {
  Activations out = run(in, &cols_);
  cached_n_ = in.n;
  cached_h_ = in.h;
  cached_w_ = in.w;
  return out;
}

Activations Conv3x3::backward(const Activations& dout) {
  require(cached_n_ >= 0, "conv");
  if (dout.n != cached_n_ || dout.c != out_channels_ || dout.h != cached_h_ || dout.w != cached_w_)
    throw ShapeError("conv: upstream gradient shape mismatch");
  const int hw = cached_h_ * cached_w_;
  const int k9 = in_channels_ * 9;
  Activations din(cached_n_, in_channels_, cached_h_, cached_w_);
  const ConstMapMat w(weight.value.data(), out_channels_, k9);
  MapMat dw(weight.grad.data(), out_channels_, k9);
  std::vector<double> dcols(static_cast<std::size_t>(k9) * hw);
  for (int i = 0; i < cached_n_; ++i) {
    const ConstMapMat d_o(dout.sample(i).data(), out_channels_, hw);
    const ConstMapMat c(cols_.data() + static_cast<std::size_t>(i) * k9 * hw, k9, hw);
    dw.noalias() += d_o * c.transpose();
    for (int oc = 0; oc < out_channels_; ++oc) bias.grad[oc] += d_o.row(oc).sum();
    MapMat dc(dcols.data(), k9, hw);
    dc.noalias() = w.transpose() * d_o;
    col2im(dcols.data(), in_channels_, cached_h_, cached_w_, din.sample(i).data());
  }
  return din;
}

// --- Relu --------------------------------------------------------------------

Activations Relu::forward(const Activations& in) const {
  Activations out = in;
  for (double& v : out.data) v = v < 0.0 ? 0.0 : v;
  return out;
}

Activations Relu::forward_train(const Activations& in) {
  active_.resize(in.data.size());
  for (std::size_t i = 0; i < in.data.size(); ++i) active_[i] = in.data[i] > 0.0;
  cached_ = true;
  return forward(in);
}

Activations Relu::backward(const Activations& dout) {
  require(cached_, "relu");
  if (dout.data.size() != active_.size()) throw ShapeError("relu: upstream gradient shape mismatch");
  Activations din = dout;
  for (std::size_t i = 0; i < din.data.size(); ++i)
    if (!active_[i]) din.data[i] = 0.0;
  return din;
}

// --- MaxPool2 ----------------------------------------------------------------

Activations MaxPool2::run(const Activations& in, std::vector<std::size_t>* argmax) const {
  const int oh = in.h / 2;
  const int ow = in.w / 2;
  Activations out(in.n, in.c, oh, ow);
  if (argmax) argmax->resize(out.data.size());
  std::size_t k = 0;
  for (int i = 0; i < in.n; ++i) {
    for (int c = 0; c < in.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(i) * in.c + c) * in.h * in.w;
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x, ++k) {
          std::size_t best = base + static_cast<std::size_t>(2 * y) * in.w + 2 * x;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + static_cast<std::size_t>(2 * y + dy) * in.w + 2 * x + dx;
              if (in.data[idx] > in.data[best]) best = idx;
            }
          out.data[k] = in.data[best];
          if (argmax) (*argmax)[k] = best;
        }
      }
    }
  }
  return out;
}

Activations MaxPool2::forward(const Activations& in) const { return run(in, nullptr); }

Activations MaxPool2::forward_train(const Activations& in) {
  in_c_ = in.c;
  in_h_ = in.h;
  in_w_ = in.w;
  cached_n_ = in.n;
  return run(in, &argmax_);
}

Activations MaxPool2::backward(const Activations& dout) {
  require(cached_n_ >= 0, "maxpool");
  if (dout.data.size() != argmax_.size()) throw ShapeError("maxpool: upstream gradient shape mismatch");
  Activations din(cached_n_, in_c_, in_h_, in_w_);
  for (std::size_t k = 0; k < argmax_.size(); ++k) din.data[argmax_[k]] += dout.data[k];
  return din;
}

// --- Dense -------------------------------------------------------------------

Dense::Dense(int in_features, int out_features)
    : weight({static_cast<std::size_t>(out_features), static_cast<std::size_t>(in_features)}),
      bias({static_cast<std::size_t>(out_features)}),
      in_features_(in_features),
      out_features_(out_features) {}

Activations Dense::forward(const Activations& in) const {
  if (static_cast<int>(in.per_sample()) != in_features_)
    throw ShapeError("dense: input feature count mismatch");
  Activations out(in.n, out_features_, 1, 1);
  const ConstMapMat x(in.data.data(), in.n, in_features_);
  const ConstMapMat w(weight.value.data(), out_features_, in_features_);
  MapMat o(out.data.data(), in.n, out_features_);
  o.noalias() = x * w.transpose();
  for (int i = 0; i < in.n; ++i)
    for (int j = 0; j < out_features_; ++j) o(i, j) += bias.value[j];
  return out;
}

Activations Dense::forward_train(const Activations& in) {
  Activations out = forward(in);
  input_ = in;
  in_c_ = in.c;
  in_h_ = in.h;
  in_w_ = in.w;
  cached_ = true;
  return out;
}

Activations Dense::backward(const Activations& dout) {
  require(cached_, "dense");
  if (dout.n != input_.n || static_cast<int>(dout.per_sample()) != out_features_)
    throw ShapeError("dense: upstream gradient shape mismatch");
  const ConstMapMat d_o(dout.data.data(), dout.n, out_features_);
  const ConstMapMat x(input_.data.data(), input_.n, in_features_);
  const ConstMapMat w(weight.value.data(), out_features_, in_features_);
  MapMat dw(weight.grad.data(), out_features_, in_features_);
  dw.noalias() += d_o.transpose() * x;
  for (int i = 0; i < dout.n; ++i)
    for (int j = 0; j < out_features_; ++j) bias.grad[j] += d_o(i, j);
  Activations din(input_.n, in_c_, in_h_, in_w_);
  MapMat dx(din.data.data(), input_.n, in_features_);
  dx.noalias() = d_o * w;
  return din;
}

// --- Softmax -----------------------------------------------------------------

Activations Softmax::forward(const Activations& in) const {
  Activations out = in;
  const std::size_t k = in.per_sample();
  for (int i = 0; i < in.n; ++i) {
    auto row = out.sample(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= total;
  }
  return out;
}

Activations Softmax::forward_train(const Activations& in) {
  output_ = forward(in);
  cached_ = true;
  return output_;
}

Activations Softmax::backward(const Activations& dout) {
  require(cached_, "softmax");
  if (!dout.same_shape(output_)) throw ShapeError("softmax: upstream gradient shape mismatch");
  Activations din = dout;
  for (int i = 0; i < dout.n; ++i) {
    const auto p = output_.sample(i);
    auto g = din.sample(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += g[j] * p[j];
    for (std::size_t j = 0; j < p.size(); ++j) g[j] = p[j] * (g[j] - dot);
  }
  return din;
}

// --- Network -----------------------------------------------------------------

void NetSpec::validate() const {
  if (channels < 1) throw ConfigError("channels", "must be at least 1");
  if (height < 4 || height % 4 != 0) throw ConfigError("height", "must be a positive multiple of 4");
  if (width < 4 || width % 4 != 0) throw ConfigError("width", "must be a positive multiple of 4");
  if (conv1 < 1) throw ConfigError("conv1", "must be at least 1");
  if (conv2 < 1) throw ConfigError("conv2", "must be at least 1");
  if (hidden < 1) throw ConfigError("hidden", "must be at least 1");
  if (classes < 2) throw ConfigError("classes", "must be at least 2");
}

Network::Network(const NetSpec& spec, Rng& init) : spec_(spec) {
  spec.validate();
  Conv3x3 c1(spec.channels, spec.conv1);
  he_uniform(c1.weight, spec.channels * 9, init);
  Conv3x3 c2(spec.conv1, spec.conv2);
  he_uniform(c2.weight, spec.conv1 * 9, init);
  const int flat = spec.conv2 * (spec.height / 4) * (spec.width / 4);
  Dense d1(flat, spec.hidden);
  he_uniform(d1.weight, flat, init);
  Dense d2(spec.hidden, spec.classes);
  he_uniform(d2.weight, spec.hidden, init);

  layers_.emplace_back(std::move(c1));
  layers_.emplace_back(Relu{});
  layers_.emplace_back(MaxPool2{});
  layers_.emplace_back(std::move(c2));
  layers_.emplace_back(Relu{});
  layers_.emplace_back(MaxPool2{});
  layers_.emplace_back(std::move(d1));
  layers_.emplace_back(Relu{});
  layers_.emplace_back(std::move(d2));
  layers_.emplace_back(Softmax{});
}

Activations Network::forward(const ImageBatch& batch) {
  if (batch.channels != spec_.channels || batch.height != spec_.height || batch.width != spec_.width)
    throw ShapeError("network: batch shape does not match input spec");
  Activations a = to_activations(batch);
  for (Layer& layer : layers_)
    a = std::visit([&a](auto& l) { return l.forward_train(a); }, layer);
  has_forward_ = true;
  forward_n_ = batch.n;
  return a;
}

Activations Network::predict(const ImageBatch& batch) const {
  if (batch.channels != spec_.channels || batch.height != spec_.height || batch.width != spec_.width)
    throw ShapeError("network: batch shape does not match input spec");
  Activations a = to_activations(batch);
  for (const Layer& layer : layers_)
    a = std::visit([&a](const auto& l) { return l.forward(a); }, layer);
  return a;
}

void Network::backward(const Activations& dprobs) {
  if (!has_forward_) throw StateError("network: backward called before forward");
  if (dprobs.n != forward_n_ || dprobs.c != spec_.classes)
    throw ShapeError("network: loss gradient shape mismatch");
  Activations g = dprobs;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = std::visit([&g](auto& l) { return l.backward(g); }, *it);
}

void Network::zero_grad() {
  for (Tensor* t : parameters()) std::fill(t->grad.begin(), t->grad.end(), 0.0);
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  for (Layer& layer : layers_) {
    if (auto* c = std::get_if<Conv3x3>(&layer)) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      out.push_back(&d->weight);
      out.push_back(&d->bias);
    }
  }
  return out;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<Network*>(this)->parameters()) out.push_back(t);
  return out;
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> names;
  int conv = 0;
  int fc = 0;
  for (const Layer& layer : layers_) {
    std::string prefix;
    if (std::holds_alternative<Conv3x3>(layer)) prefix = "conv" + std::to_string(++conv);
    else if (std::holds_alternative<Dense>(layer)) prefix = "fc" + std::to_string(++fc);
    else continue;
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
  }
  return names;
}

std::size_t Network::parameter_bytes() const {
  std::size_t total = 0;
  for (const Tensor* t : parameters()) total += t->size() * sizeof(double);
  return total;
}

// --- Optimizer -----------------------------------------------------------------

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("lr", "learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be non-negative");
  for (const LrMilestone& m : schedule) {
    if (m.epoch < 0) throw ConfigError("lr_schedule", "milestone epochs must be non-negative");
    if (!(m.factor > 0.0 && m.factor <= 1.0))
      throw ConfigError("lr_schedule", "factors must lie in (0, 1]");
  }
}

double SgdConfig::rate_at(int epoch) const {
  double rate = learning_rate;
  for (const LrMilestone& m : schedule)
    if (epoch >= m.epoch) rate *= m.factor;
  return rate;
}

Sgd::Sgd(SgdConfig config) : config_(std::move(config)) { config_.validate(); }

void Sgd::step(std::span<Tensor* const> params, double learning_rate) {
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i]->size(), 0.0);
  }
  const double mu = config_.momentum;
  const double wd = config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    std::vector<double>& v = velocity_[i];
    if (v.size() != p.size()) throw ShapeError("sgd: velocity shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k] + wd * p.value[k];
      v[k] = mu * v[k] + g;
      p.value[k] -= config_.nesterov ? learning_rate * (g + mu * v[k]) : learning_rate * v[k];
    }
  }
}

// --- EMA -----------------------------------------------------------------------

TeacherStudent::TeacherStudent(Network net, double alpha_)
    : student(std::move(net)), teacher(student), alpha(alpha_) {}

void ema_update(Network& teacher, const Network& student, double alpha) {
  auto tp = teacher.parameters();
  const auto sp = student.parameters();
  if (tp.size() != sp.size()) throw ShapeError("ema: architectures differ");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i]->size() != sp[i]->size()) throw ShapeError("ema: parameter shapes differ");
    auto& phi = tp[i]->value;
    const auto& theta = sp[i]->value;
    for (std::size_t k = 0; k < phi.size(); ++k) phi[k] = alpha * phi[k] + (1.0 - alpha) * theta[k];
  }
}

}  // namespace cowmask::nn
