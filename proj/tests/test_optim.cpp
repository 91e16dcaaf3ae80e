#include <doctest.h>

#include <array>
#include <cmath>

#include "cowmask/error.hpp"
#include "cowmask/tinynet.hpp"

using namespace cowmask;
using namespace cowmask::nn;

namespace {

using Mat2 = std::array<long double, 4>;

Mat2 mul(const Mat2& a, const Mat2& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
          a[2] * b[1] + a[3] * b[3]};
}

Mat2 power(Mat2 m, int k) {
  Mat2 r{1, 0, 0, 1};
  while (k > 0) {
    if (k & 1) r = mul(r, m);
    m = mul(m, m);
    k >>= 1;
  }
  return r;
}

// On f(theta) = a theta^2 / 2 with L2 decay wd, the optimizer is linear in
// (theta, v) with c = a + wd:
//   Nesterov:  theta' = (1 - lr c (1 + mu)) theta - lr mu^2 v,  v' = c theta + mu v
//   classical: theta' = (1 - lr c) theta - lr mu v,              v' = c theta + mu v
double theta_after(double a, double wd, double lr, double mu, bool nesterov, double theta0, int k) {
  const long double c = a + wd;
  const Mat2 m = nesterov ? Mat2{1 - lr * c * (1 + mu), -lr * mu * mu, c, mu}
                          : Mat2{1 - lr * c, -lr * mu, c, mu};
  const Mat2 p = power(m, k);
  return static_cast<double>(p[0] * theta0);
}

void run_quadratic(Sgd& sgd, Tensor& t, const std::vector<double>& curvature, int steps, double lr) {
  std::vector<Tensor*> params{&t};
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < t.size(); ++i) t.grad[i] = curvature[i] * t.value[i];
    sgd.step(params, lr);
  }
}

}  // namespace

TEST_CASE("two hand-computed Nesterov steps") {
  Tensor t({1});
  t.value = {1.0};
  SgdConfig cfg{0.1, 0.9, 0.0, true, {}};
  Sgd sgd(cfg);
  run_quadratic(sgd, t, {1.0}, 1, 0.1);
  CHECK(t.value[0] == doctest::Approx(0.81).epsilon(1e-15));
  run_quadratic(sgd, t, {1.0}, 1, 0.1);
  CHECK(t.value[0] == doctest::Approx(0.5751).epsilon(1e-15));
}

TEST_CASE("Nesterov and classical momentum match the matrix-power oracle") {
  const std::vector<double> curvature{0.5, 1.0, 3.0, 0.0};
  for (const bool nesterov : {true, false})
    for (const double wd : {0.0, 5e-4, 0.01}) {
      Tensor t({4});
      t.value = {1.0, -2.0, 0.5, 3.0};
      const std::vector<double> start = t.value;
      Sgd sgd(SgdConfig{0.05, 0.9, wd, nesterov, {}});
      run_quadratic(sgd, t, curvature, 50, 0.05);
      for (std::size_t i = 0; i < 4; ++i) {
        const double expect = theta_after(curvature[i], wd, 0.05, 0.9, nesterov, start[i], 50);
        CHECK(t.value[i] == doctest::Approx(expect).epsilon(1e-12).scale(1e-12));
      }
    }
}

TEST_CASE("momentum zero is plain gradient descent") {
  Tensor t({2});
  t.value = {1.0, -1.0};
  Sgd sgd(SgdConfig{0.1, 0.0, 0.0, true, {}});
  run_quadratic(sgd, t, {2.0, 2.0}, 3, 0.1);
  CHECK(t.value[0] == doctest::Approx(std::pow(0.8, 3)).epsilon(1e-15));
  CHECK(t.value[1] == doctest::Approx(-std::pow(0.8, 3)).epsilon(1e-15));
}

TEST_CASE("step learning-rate schedule") {
  SgdConfig cfg{0.05, 0.9, 5e-4, true, {{8, 0.2}, {16, 0.2}}};
  CHECK(cfg.rate_at(0) == 0.05);
  CHECK(cfg.rate_at(7) == 0.05);
  CHECK(cfg.rate_at(8) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(cfg.rate_at(15) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(cfg.rate_at(16) == doctest::Approx(0.002).epsilon(1e-15));
}

TEST_CASE("optimizer config validation") {
  CHECK_THROWS_AS((SgdConfig{-0.1, 0.9, 0.0, true, {}}.validate()), ConfigError);
  CHECK_THROWS_AS((SgdConfig{0.1, 1.0, 0.0, true, {}}.validate()), ConfigError);
  CHECK_THROWS_AS((SgdConfig{0.1, 0.9, -1.0, true, {}}.validate()), ConfigError);
  CHECK_THROWS_AS((SgdConfig{0.1, 0.9, 0.0, true, {{3, 0.0}}}.validate()), ConfigError);
  CHECK_NOTHROW((SgdConfig{0.1, 0.9, 0.0, true, {{3, 0.2}}}.validate()));
}

TEST_CASE("EMA with a frozen student follows the closed form") {
  for (const double alpha : {0.9, 0.99}) {
    Rng rng(1);
    const NetSpec spec{1, 8, 8, 3, 4, 5, 3};
    Network student(spec, rng);
    Network teacher(spec, rng);
    const auto phi0 = teacher.parameters();
    std::vector<std::vector<double>> start;
    for (const Tensor* p : phi0) start.push_back(p->value);
    for (int k = 0; k < 50; ++k) ema_update(teacher, student, alpha);
    const auto theta = student.parameters();
    const auto phi = teacher.parameters();
    double worst = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j)
      for (std::size_t i = 0; i < phi[j]->size(); ++i) {
        const double expect = theta[j]->value[i] + std::pow(alpha, 50) * (start[j][i] - theta[j]->value[i]);
        worst = std::max(worst, std::abs(phi[j]->value[i] - expect));
      }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("teacher starts as a copy of the student") {
  Rng rng(2);
  const TeacherStudent ts(Network(NetSpec{1, 4, 4, 2, 2, 3, 2}, rng), 0.97);
  const auto s = ts.student.parameters();
  const auto t = ts.teacher.parameters();
  for (std::size_t j = 0; j < s.size(); ++j) CHECK(s[j]->value == t[j]->value);
  CHECK(ts.alpha == 0.97);
}
