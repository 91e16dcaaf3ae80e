#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cowmask/error.hpp"
#include "cowmask/tinynet.hpp"
#include "grad_check.hpp"

using namespace cowmask;
using namespace cowmask::nn;

TEST_CASE("every layer and the composed network pass central-difference checks") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    const testing::GradReport g = testing::gradient_suite(seed);
    CHECK(g.conv < testing::kGradTolerance);
    CHECK(g.dense < testing::kGradTolerance);
    CHECK(g.relu < testing::kGradTolerance);
    CHECK(g.maxpool < testing::kGradTolerance);
    CHECK(g.softmax < testing::kGradTolerance);
    CHECK(g.network < testing::kGradTolerance);
  }
}

TEST_CASE("forward and predict agree") {
  Rng rng(3);
  Network net(NetSpec{1, 8, 8, 4, 4, 8, 3}, rng);
  ImageBatch batch(3, 1, 8, 8);
  rng.fill_normal(batch.data);
  const Activations a = net.forward(batch);
  const Activations b = net.predict(batch);
  CHECK(a.data == b.data);
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (double v : a.sample(i)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("backward without forward is a state error") {
  Rng rng(0);
  Network net(NetSpec{1, 8, 8, 2, 2, 4, 2}, rng);
  CHECK_THROWS_AS(net.backward(Activations(1, 2, 1, 1)), StateError);
}

TEST_CASE("network spec validation and parameter naming") {
  Rng rng(0);
  CHECK_THROWS(Network(NetSpec{1, 10, 8, 2, 2, 4, 2}, rng));
  Network net(NetSpec{1, 8, 8, 2, 3, 4, 5}, rng);
  const auto names = net.parameter_names();
  REQUIRE(names.size() == 8);
  CHECK(names.front() == "conv1.weight");
  CHECK(names.back() == "fc2.bias");
  const auto params = net.parameters();
  CHECK(params[0]->shape == std::vector<std::size_t>{2, 1, 3, 3});
  CHECK(params[6]->shape == std::vector<std::size_t>{5, 4});
  for (const Tensor* p : params)
    if (p->shape.size() == 1)
      CHECK(std::all_of(p->value.begin(), p->value.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("maxpool ties route the gradient to the first maximum") {
  MaxPool2 pool;
  Activations x(1, 1, 2, 2);
  x.data = {1.0, 1.0, 1.0, 1.0};
  pool.forward_train(x);
  Activations d(1, 1, 1, 1);
  d.data = {2.0};
  const Activations dx = pool.backward(d);
  CHECK(dx.data == std::vector<double>{2.0, 0.0, 0.0, 0.0});
}
