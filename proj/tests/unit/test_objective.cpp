#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "pex/objective.hpp"
#include "support.hpp"

using namespace pex;
using namespace pex::objective;
using doctest::Approx;
using pex::testing::numeric_gradient;
using pex::testing::random_matrix;
using pex::testing::relative_error;

TEST_CASE("classification loss hand values") {
  const std::vector<int> a1 = {1};
  CHECK(classification_loss(Matrix::from_rows({{1, 2}}), a1) == Approx(-std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0)))));
  CHECK(classification_loss(Matrix::from_rows({{1, 2}}), a1) == Approx(0.3133).epsilon(1e-4));
  const std::vector<int> a0 = {0};
  CHECK(classification_loss(Matrix(1, 5), a0) == Approx(std::log(5.0)).epsilon(1e-12));
  CHECK(classification_loss(Matrix::from_rows({{50, 0, 0}}), a0) < 1e-20);
}

TEST_CASE("classification loss one-hot form and errors") {
  const Matrix one_hot = Matrix::from_rows({{0, 1}, {1, 0}});
  const Matrix scores = Matrix::from_rows({{1, 2}, {3, -1}});
  const std::vector<int> idx = {1, 0};
  CHECK(classification_loss(scores, one_hot) == Approx(classification_loss(scores, idx)));
  CHECK(one_hot_to_indices(one_hot) == idx);
  CHECK_THROWS_AS(one_hot_to_indices(Matrix::from_rows({{1, 1}})), ShapeError);
  CHECK_THROWS_AS(classification_loss(scores, Matrix(2, 3)), ShapeError);
  const std::vector<int> bad = {2, 0};
  CHECK_THROWS(classification_loss(scores, bad));
}

TEST_CASE("mean and sum reductions differ by the sample count") {
  Rng rng(1);
  const Matrix s = random_matrix(rng, 4, 3);
  const std::vector<int> a = {0, 2, 1, 1};
  CHECK(classification_loss(s, a, Reduction::Sum) == Approx(4.0 * classification_loss(s, a)));
}

TEST_CASE("generator label loss hand values") {
  const std::vector<int> a0 = {0};
  CHECK(generator_label_loss(Matrix::from_rows({{0, 2}}), a0) == Approx(2.1269).epsilon(1e-4));
  CHECK(generator_label_loss(Matrix(1, 3), a0) == Approx(std::log(3.0)).epsilon(1e-12));
  const Matrix s = Matrix::from_rows({{0.3, -1.2, 2.0}});
  const std::vector<int> a2 = {2};
  CHECK(generator_label_loss(s, a2) == classification_loss(s, a2));
}

TEST_CASE("mle loss hand values, masking and padding") {
  const std::vector<int> t = {0, 1};
  CHECK(mle_loss(Matrix::from_rows({{1, 0}, {0, 1}}), t) == Approx(0.3133).epsilon(1e-4));
  CHECK(mle_loss(Matrix(3, 4), std::vector<int>{3, 0, 2}) == Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(mle_loss(Matrix::from_rows({{50, 0}, {0, 50}}), t) < 1e-6);

  // Appending masked padding leaves the loss unchanged.
  Rng rng(2);
  const Matrix logits = random_matrix(rng, 3, 5);
  const std::vector<int> targets = {4, 1, 2};
  Matrix padded(6, 5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) padded(i, j) = logits(i, j);
  for (std::size_t i = 3; i < 6; ++i) padded(i, 0) = 9.0;
  const std::vector<int> padded_targets = {4, 1, 2, 0, 0, 0};
  const std::vector<unsigned char> mask = {1, 1, 1, 0, 0, 0};
  CHECK(mle_loss(padded, padded_targets, mask) == Approx(mle_loss(logits, targets)).epsilon(1e-14));

  const std::vector<unsigned char> none = {0, 0};
  CHECK_THROWS_AS(mle_loss(Matrix(2, 2), t, none), LossError);
}

TEST_CASE("distillation loss hand values") {
  const Matrix p = Matrix::from_rows({{0, 0}});
  const Matrix g = Matrix::from_rows({{0, std::log(3.0)}});
  const double expected = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
  CHECK(distillation_loss(p, g) == Approx(expected).epsilon(1e-12));
  CHECK(distillation_loss(p, g) == Approx(0.1308).epsilon(1e-3));
  CHECK(distillation_loss(g, g) == 0.0);
  DistillOptions bad;
  bad.tau = 0.0;
  CHECK_THROWS_AS(distillation_loss(p, g, bad), ParameterError);
}

TEST_CASE("tau squared scaling") {
  Rng rng(8);
  const Matrix p = random_matrix(rng, 3, 4), g = random_matrix(rng, 3, 4);
  DistillOptions a, b;
  a.tau = b.tau = 2.0;
  b.scale_by_tau_sq = true;
  CHECK(distillation_loss(p, g, b) == Approx(4.0 * distillation_loss(p, g, a)));
}

TEST_CASE("total loss") {
  LossReport r;
  r.ce = 1;
  r.mle = 2;
  r.ce_g = 3;
  r.dis = 4;
  CHECK(total_loss(r, LossWeights{}) == 10.0);
  LossWeights selector{1, 0, 0, 0, 1};
  CHECK(total_loss(r, selector) == r.ce);
  CHECK(total_loss(LossReport{}, LossWeights{}) == 0.0);
  r.mle = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(total_loss(r, LossWeights{}), LossError);
  // A NaN behind a zero weight is still an error.
  CHECK_THROWS_AS(total_loss(r, selector), LossError);
}

TEST_CASE("loss weight validation") {
  LossWeights w;
  w.tau = 0.0;
  CHECK_THROWS_AS(w.validate(), ParameterError);
  w = LossWeights{};
  w.dis = -1.0;
  CHECK_THROWS_AS(w.validate(), ParameterError);
}

TEST_CASE("analytic gradients of the plain loss functions") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix s = random_matrix(rng, 3, 4, 2.0);
    const std::vector<int> a = {1, 3, 0};
    Matrix grad;
    classification_loss(s, a, Reduction::Mean, &grad);
    CHECK(relative_error(grad, numeric_gradient(s, [&] { return classification_loss(s, a); })) < 1e-7);

    Matrix logits = random_matrix(rng, 5, 6, 2.0);
    const std::vector<int> t = {0, 5, 2, 2, 1};
    const std::vector<unsigned char> m = {1, 1, 0, 1, 0};
    mle_loss(logits, t, m, Reduction::Sum, &grad);
    CHECK(relative_error(grad, numeric_gradient(logits, [&] { return mle_loss(logits, t, m, Reduction::Sum); })) <
          1e-7);

    Matrix p = random_matrix(rng, 3, 4, 2.0), g = random_matrix(rng, 3, 4, 2.0);
    DistillOptions o;
    o.tau = 0.5 + trial * 0.3;
    Matrix gp, gg;
    distillation_loss(p, g, o, &gp, &gg);
    CHECK(relative_error(gp, numeric_gradient(p, [&] { return distillation_loss(p, g, o); })) < 1e-7);
    CHECK(relative_error(gg, numeric_gradient(g, [&] { return distillation_loss(p, g, o); })) < 1e-7);
  }
}

TEST_CASE("tape losses agree with the plain functions and honour detach") {
  Rng rng(4);
  nn::ParameterSet ps;
  nn::Parameter& pp = ps.add("p", random_matrix(rng, 2, 3));
  nn::Parameter& gp = ps.add("g", random_matrix(rng, 2, 3));
  DistillOptions o;
  o.detach_target = true;
  nn::Tape t;
  nn::Var loss = distillation_loss(t.param(pp), t.param(gp), o);
  CHECK(loss.scalar() == Approx(distillation_loss(pp.value, gp.value)).epsilon(1e-14));
  t.backward(loss);
  CHECK(pex::testing::frobenius(pp.grad) > 0.0);
  CHECK(pex::testing::frobenius(gp.grad) == 0.0);

  const std::vector<int> a = {2, 0};
  nn::Tape t2;
  CHECK(classification_loss(t2.param(pp), a).scalar() == Approx(classification_loss(pp.value, a)).epsilon(1e-14));
}

TEST_CASE("batch-order invariance of the mean-form terms") {
  Rng rng(6);
  const Matrix p = random_matrix(rng, 4, 3), g = random_matrix(rng, 4, 3);
  const std::vector<int> a = {0, 1, 2, 1};
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  Matrix pp(4, 3), gg(4, 3);
  std::vector<int> aa(4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      pp(i, k) = p(perm[i], k);
      gg(i, k) = g(perm[i], k);
    }
    aa[i] = a[perm[i]];
  }
  CHECK(classification_loss(pp, aa) == Approx(classification_loss(p, a)).epsilon(1e-14));
  CHECK(distillation_loss(pp, gg) == Approx(distillation_loss(p, g)).epsilon(1e-14));
}
