#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cowmask/tinynet.hpp"

namespace cowmask::testing {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-7): relative where the gradient is sizeable,
/// absolute near zero.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
}

/// (f(x + h) - f(x - h)) / 2h, restoring x afterwards.
template <typename F>
double central_difference(double& x, F&& f) {
  const double saved = x;
  x = saved + kGradStep;
  const double up = f();
  x = saved - kGradStep;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * kGradStep);
}

inline nn::Activations random_activations(int n, int c, int h, int w, Rng& rng) {
  nn::Activations a(n, c, h, w);
  rng.fill_normal(a.data);
  return a;
}

/// Worst relative error of a layer's input and parameter gradients for the
/// loss sum(r * layer(x)) with random r.
template <typename L>
double layer_grad_error(L& layer, const nn::Activations& x, Rng& rng, std::vector<nn::Tensor*> params) {
  const nn::Activations probe = layer.forward(x);
  nn::Activations r(probe.n, probe.c, probe.h, probe.w);
  rng.fill_normal(r.data);
  auto loss = [&](const nn::Activations& in) {
    const nn::Activations y = layer.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += r.data[i] * y.data[i];
    return s;
  };

  for (nn::Tensor* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  layer.forward_train(x);
  const nn::Activations dx = layer.backward(r);

  double worst = 0.0;
  nn::Activations xp = x;
  for (std::size_t i = 0; i < x.data.size(); ++i)
    worst = std::max(worst, relative_error(dx.data[i], central_difference(xp.data[i], [&] { return loss(xp); })));
  for (nn::Tensor* p : params)
    for (std::size_t i = 0; i < p->size(); ++i)
      worst = std::max(worst, relative_error(p->grad[i], central_difference(p->value[i], [&] { return loss(x); })));
  return worst;
}

/// Worst relative error over every parameter of a small composed network
/// (He init, small random biases) for the loss sum(r * net(x)).
inline double network_grad_error(Rng& rng) {
  nn::Network net(nn::NetSpec{2, 8, 4, 3, 4, 6, 3}, rng);
  for (nn::Tensor* p : net.parameters())
    if (p->shape.size() == 1)
      for (double& v : p->value) v = 0.1 * rng.normal();
  ImageBatch batch(2, 2, 8, 4);
  rng.fill_normal(batch.data);
  nn::Activations r(2, 3, 1, 1);
  rng.fill_normal(r.data);
  auto loss = [&] {
    const nn::Activations y = net.predict(batch);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += r.data[i] * y.data[i];
    return s;
  };
  net.zero_grad();
  net.forward(batch);
  net.backward(r);
  double worst = 0.0;
  for (nn::Tensor* p : net.parameters())
    for (std::size_t i = 0; i < p->size(); ++i)
      worst = std::max(worst, relative_error(p->grad[i], central_difference(p->value[i], loss)));
  return worst;
}

struct GradReport {
  double conv = 0.0;
  double dense = 0.0;
  double relu = 0.0;
  double maxpool = 0.0;
  double softmax = 0.0;
  double network = 0.0;

  double worst() const { return std::max({conv, dense, relu, maxpool, softmax, network}); }
};

/// Every layer type and the composed network, all driven by one seed.
inline GradReport gradient_suite(std::uint64_t seed) {
  GradReport g;
  Rng rng(seed);
  nn::Conv3x3 conv(2, 3);
  rng.fill_normal(conv.weight.value);
  rng.fill_normal(conv.bias.value);
  g.conv = layer_grad_error(conv, random_activations(2, 2, 5, 4, rng), rng, {&conv.weight, &conv.bias});
  nn::Dense dense(12, 5);
  rng.fill_normal(dense.weight.value);
  rng.fill_normal(dense.bias.value);
  g.dense = layer_grad_error(dense, random_activations(3, 3, 2, 2, rng), rng, {&dense.weight, &dense.bias});
  nn::Relu relu;
  g.relu = layer_grad_error(relu, random_activations(2, 2, 3, 3, rng), rng, {});
  nn::MaxPool2 pool;
  g.maxpool = layer_grad_error(pool, random_activations(2, 2, 4, 6, rng), rng, {});
  nn::Softmax softmax;
  g.softmax = layer_grad_error(softmax, random_activations(4, 5, 1, 1, rng), rng, {});
  g.network = network_grad_error(rng);
  return g;
}

}  // namespace cowmask::testing
