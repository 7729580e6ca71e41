#include <doctest.h>

#include <cmath>
#include <vector>

#include "pex/errors.hpp"
#include "pex/optim.hpp"
#include "support.hpp"

using namespace pex;
using namespace pex::optim;
using doctest::Approx;

TEST_CASE("gradient clipping") {
  nn::ParameterSet ps;
  auto& a = ps.add("a", Matrix::from_rows({{3.0, 0.0}}));
  auto& b = ps.add("b", Matrix::from_rows({{4.0}}));
  a.grad = Matrix::from_rows({{3.0, 0.0}});
  b.grad = Matrix::from_rows({{4.0}});
  CHECK(clip_grad_norm(ps, 1.0) == Approx(5.0));
  CHECK(ps.grad_norm() == Approx(1.0).epsilon(1e-6));
  CHECK(a.grad(0, 0) / b.grad(0, 0) == Approx(0.75));

  const double before = ps.grad_norm();
  clip_grad_norm(ps, 2.0);
  CHECK(ps.grad_norm() == before);
  CHECK_THROWS_AS(clip_grad_norm(ps, 0.0), ParameterError);

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    a.grad = pex::testing::random_matrix(rng, 1, 2, 10.0);
    b.grad = pex::testing::random_matrix(rng, 1, 1, 10.0);
    clip_grad_norm(ps, 1.0);
    CHECK(ps.grad_norm() <= 1.0 + 1e-6);
  }
}

TEST_CASE("linear warmup then linear decay") {
  CHECK(linear_schedule(0, 10, 100) == 0.0);
  CHECK(linear_schedule(5, 10, 100) == Approx(0.5));
  CHECK(linear_schedule(10, 10, 100) == Approx(1.0));
  CHECK(linear_schedule(55, 10, 100) == Approx(0.5));
  CHECK(linear_schedule(100, 10, 100) == 0.0);
  CHECK(linear_schedule(150, 10, 100) == 0.0);
  CHECK(linear_schedule(0, 0, 4) == Approx(1.0));
  CHECK(linear_schedule(3, 0, 4) == Approx(0.25));
  double prev = 1.0;
  for (std::size_t s = 10; s <= 100; ++s) {
    const double m = linear_schedule(s, 10, 100);
    CHECK(m <= prev);
    prev = m;
  }
}

TEST_CASE("AdamW matches a scalar recurrence") {
  nn::ParameterSet ps;
  auto& w = ps.add("w", Matrix::from_rows({{1.0, -2.0}, {0.5, 0.0}}));
  auto& b = ps.add("b", Matrix::from_rows({{0.3, 0.7}}));
  AdamWOptions o;
  AdamW opt(o);
  std::vector<double> ws = w.value.storage(), bs = b.value.storage();
  std::vector<double> mw(4, 0.0), vw(4, 0.0), mb(2, 0.0), vb(2, 0.0);
  Rng rng(3);
  const double lr = 0.01;
  for (int t = 1; t <= 5; ++t) {
    w.grad = pex::testing::random_matrix(rng, 2, 2);
    b.grad = pex::testing::random_matrix(rng, 1, 2);
    auto update = [&](std::vector<double>& x, std::vector<double>& m, std::vector<double>& v, const Matrix& g,
                      bool decay) {
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (decay) x[k] *= 1.0 - lr * o.weight_decay;
        m[k] = 0.9 * m[k] + 0.1 * g.storage()[k];
        v[k] = 0.999 * v[k] + 0.001 * g.storage()[k] * g.storage()[k];
        const double mh = m[k] / (1.0 - std::pow(0.9, t));
        const double vh = v[k] / (1.0 - std::pow(0.999, t));
        x[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
      }
    };
    update(ws, mw, vw, w.grad, true);
    update(bs, mb, vb, b.grad, false);
    opt.step(ps, lr);
  }
  CHECK(opt.steps_taken() == 5);
  for (std::size_t k = 0; k < 4; ++k) CHECK(w.value.storage()[k] == Approx(ws[k]).epsilon(1e-13));
  for (std::size_t k = 0; k < 2; ++k) CHECK(b.value.storage()[k] == Approx(bs[k]).epsilon(1e-13));
}

TEST_CASE("AdamW first step moves each weight by about lr") {
  nn::ParameterSet ps;
  auto& b = ps.add("b", Matrix::from_rows({{0.0, 0.0}}));
  b.grad = Matrix::from_rows({{5.0, -0.01}});
  AdamW opt;
  opt.step(ps, 0.1);
  CHECK(b.value(0, 0) == Approx(-0.1).epsilon(1e-6));
  CHECK(b.value(0, 1) == Approx(0.1).epsilon(1e-4));
}

TEST_CASE("Adafactor factored and unfactored updates") {
  nn::ParameterSet ps;
  auto& w = ps.add("w", Matrix(2, 3));
  auto& v = ps.add("v", Matrix(1, 3));
  w.grad = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  v.grad = Matrix::from_rows({{1, -1, 2}});
  Adafactor opt;
  opt.step(ps, 0.5);
  // Step 1 has beta2 = 0: the second moment is g^2 itself.
  // Factored: row means r = [14/3, 77/3], column means c = [17/2, 29/2, 45/2];
  // v_hat(i,j) = r_i c_j / mean(r).
  const double r[2] = {14.0 / 3.0, 77.0 / 3.0};
  const double c[3] = {8.5, 14.5, 22.5};
  const double rbar = (r[0] + r[1]) / 2.0;
  Matrix u(2, 3);
  double ss = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      u(i, j) = w.grad(i, j) / std::sqrt(r[i] * c[j] / rbar);
      ss += u(i, j) * u(i, j);
    }
  const double denom = std::max(1.0, std::sqrt(ss / 6.0));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(w.value(i, j) == Approx(-0.5 * u(i, j) / denom).epsilon(1e-12));
  // Unfactored: u = g / |g| = sign(g), rms 1.
  CHECK(v.value(0, 0) == Approx(-0.5));
  CHECK(v.value(0, 1) == Approx(0.5));
  CHECK(v.value(0, 2) == Approx(-0.5));
}

TEST_CASE("optimizer factory") {
  CHECK(dynamic_cast<AdamW*>(make_optimizer("adamw").get()) != nullptr);
  CHECK(dynamic_cast<Adafactor*>(make_optimizer("adafactor").get()) != nullptr);
  CHECK_THROWS_AS(make_optimizer("sgd"), ConfigError);
}

TEST_CASE("optimizers reduce a quadratic") {
  for (const char* name : {"adamw", "adafactor"}) {
    CAPTURE(name);
    nn::ParameterSet ps;
    auto& w = ps.add("w", Matrix::from_rows({{2.0, -1.0}, {0.5, 3.0}}));
    auto opt = make_optimizer(name);
    const double start = pex::testing::frobenius(w.value);
    for (int t = 0; t < 200; ++t) {
      w.grad = w.value;  // d/dw of |w|^2 / 2
      opt->step(ps, 0.05);
    }
    CHECK(pex::testing::frobenius(w.value) < 0.2 * start);
  }
}
