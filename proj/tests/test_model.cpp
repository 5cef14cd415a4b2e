#include "fedcomp/fedcomp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace fedcomp;

namespace {

Minibatch single(std::initializer_list<double> a, int b) {
  RowMatrix f(1, static_cast<Eigen::Index>(a.size()));
  Eigen::Index j = 0;
  for (double v : a) f(0, j++) = v;
  return {std::move(f), {b}};
}

// Identical features with labels +1, -1: the CE gradient vanishes at w = 0.
Minibatch symmetric_batch(std::size_t d) {
  RowMatrix f = RowMatrix::Constant(2, static_cast<Eigen::Index>(d), 0.7);
  return {std::move(f), {1, -1}};
}

}  // namespace

TEST(Score, LinearExamples) {
  const LogisticLinear lin(2);
  Vector w(2), a(2);
  w << 1, 2;
  a << 3, -1;
  EXPECT_EQ(lin.score(w, a), 1.0);
  EXPECT_EQ(lin.score(Vector::Zero(2), a), 0.0);
  EXPECT_EQ(lin.score_grad(w, a), a);
  EXPECT_EQ(lin.score_grad(w, Vector::Zero(2)), Vector::Zero(2));
}

TEST(Score, ZeroMlpIsZero) {
  const TanhMlp mlp(3, 5);
  RngStream rng(1, 0);
  EXPECT_EQ(mlp.score(Vector::Zero(static_cast<Eigen::Index>(mlp.param_dim())), oracle::random_vector(3, rng)), 0.0);
}

TEST(Score, DimensionMismatch) {
  const LogisticLinear lin(2);
  const TanhMlp mlp(2, 4);
  EXPECT_THROW(lin.score(Vector::Zero(3), Vector::Zero(2)), DimensionError);
  EXPECT_THROW(lin.score(Vector::Zero(2), Vector::Zero(3)), DimensionError);
  EXPECT_THROW(mlp.score(Vector::Zero(5), Vector::Zero(2)), DimensionError);
  EXPECT_THROW(mlp.score_grad(Vector::Zero(static_cast<Eigen::Index>(mlp.param_dim())), Vector::Zero(1)),
               DimensionError);
}

TEST(ScoreGrad, MlpMatchesFiniteDifference) {
  RngStream rng(3, 0);
  const TanhMlp mlp(4, 6);
  for (int it = 0; it < 50; ++it) {
    const Vector w = oracle::random_vector(static_cast<Eigen::Index>(mlp.param_dim()), rng, 0.7);
    const Vector a = oracle::random_vector(4, rng);
    const Vector fd = oracle::fd_gradient([&](const Vector& x) { return mlp.score(x, a); }, w, 1e-6);
    EXPECT_LE(oracle::rel_err(mlp.score_grad(w, a), fd), 1e-5);
  }
}

TEST(CeLoss, Examples) {
  const LogisticLinear lin(1);
  RngStream rng(2, 0);
  EXPECT_NEAR(ce_loss(lin, Vector::Zero(1), oracle::random_batch(9, 1, rng)), std::log(2.0), 1e-15);
  Vector w(1);
  w << 1.0;
  EXPECT_NEAR(ce_loss(lin, w, single({2.0}, 1)), 0.1269280110429725, 1e-15);
  w << 800.0;
  EXPECT_EQ(ce_loss(lin, w, single({1.0}, 1)), 0.0);
  EXPECT_NEAR(ce_loss(lin, w, single({1.0}, -1)), 800.0, 1e-9);
}

TEST(CeLoss, MatchesPlainLoopOracle) {
  RngStream rng(6, 0);
  const LogisticLinear lin(5);
  for (int it = 0; it < 20; ++it) {
    const Minibatch b = oracle::random_batch(17, 5, rng);
    const Vector w = oracle::random_vector(5, rng);
    EXPECT_NEAR(ce_loss(lin, w, b), oracle::linear_ce(w, b), 1e-13);
  }
}

TEST(CeLoss, EmptyBatchRejected) {
  const LogisticLinear lin(2);
  EXPECT_THROW(ce_loss(lin, Vector::Zero(2), Minibatch{}), Error);
  EXPECT_THROW(ce_grad(lin, Vector::Zero(2), Minibatch{}), Error);
}

TEST(CeGrad, MatchesFiniteDifferenceBothModels) {
  RngStream rng(4, 0);
  const LogisticLinear lin(4);
  const TanhMlp mlp(4, 5);
  for (int it = 0; it < 50; ++it) {
    const Minibatch b = oracle::random_batch(12, 4, rng);
    const Vector w = oracle::random_vector(4, rng);
    EXPECT_LE(oracle::rel_err(ce_grad(lin, w, b),
                              oracle::fd_gradient([&](const Vector& x) { return oracle::linear_ce(x, b); }, w, 1e-6)),
              1e-5);
    const Vector wm = oracle::random_vector(static_cast<Eigen::Index>(mlp.param_dim()), rng, 0.5);
    EXPECT_LE(oracle::rel_err(ce_grad(mlp, wm, b),
                              oracle::fd_gradient([&](const Vector& x) { return ce_loss(mlp, x, b); }, wm, 1e-6)),
              1e-5);
  }
}

TEST(CeGrad, SymmetricBatchAtZero) {
  const LogisticLinear lin(3);
  EXPECT_EQ(ce_grad(lin, Vector::Zero(3), symmetric_batch(3)), Vector::Zero(3));
}

TEST(CeGrad, SingleSampleClosedForm) {
  const LogisticLinear lin(2);
  Vector w(2);
  w << 0.3, -0.8;
  for (int b : {1, -1}) {
    const Minibatch batch = single({1.5, 0.25}, b);
    const Vector a = batch.row(0);
    const double h = w.dot(a);
    const Vector expected = -b * oracle::logistic(-b * h) * a;
    EXPECT_LE(oracle::rel_err(ce_grad(lin, w, batch), expected), 1e-15);
  }
}

TEST(CeHvp, ZeroDirection) {
  RngStream rng(5, 0);
  const LogisticLinear lin(3);
  const TanhMlp mlp(3, 4);
  const Minibatch b = oracle::random_batch(8, 3, rng);
  EXPECT_EQ(lin.ce_hvp(oracle::random_vector(3, rng), b, Vector::Zero(3)), Vector::Zero(3));
  const auto pm = static_cast<Eigen::Index>(mlp.param_dim());
  EXPECT_EQ(mlp.ce_hvp(oracle::random_vector(pm, rng), b, Vector::Zero(pm)), Vector::Zero(pm));
}

TEST(CeHvp, LinearClosedFormAndFiniteDifference) {
  RngStream rng(7, 0);
  const LogisticLinear lin(4);
  for (int it = 0; it < 50; ++it) {
    const Minibatch b = oracle::random_batch(10, 4, rng);
    const Vector w = oracle::random_vector(4, rng);
    const Vector v = oracle::random_vector(4, rng);
    Vector closed = Vector::Zero(4);
    for (std::size_t i = 0; i < b.size(); ++i) {
      const Vector a = b.row(i);
      const double s = oracle::logistic(b.labels[i] * w.dot(a));
      closed += s * (1 - s) * a.dot(v) * a;
    }
    closed /= static_cast<double>(b.size());
    const Vector hv = lin.ce_hvp(w, b, v);
    EXPECT_LE(oracle::rel_err(hv, closed), 1e-12);
    const double step = 1e-5;
    const Vector fd = (ce_grad(lin, w + step * v, b) - ce_grad(lin, w - step * v, b)) / (2 * step);
    EXPECT_LE(oracle::rel_err(hv, fd), 1e-4);
    EXPECT_GE(v.dot(hv), 0.0);
  }
}

TEST(CeHvp, LinearIsLinearAndSymmetric) {
  RngStream rng(8, 0);
  const LogisticLinear lin(5);
  for (int it = 0; it < 20; ++it) {
    const Minibatch b = oracle::random_batch(9, 5, rng);
    const Vector w = oracle::random_vector(5, rng);
    const Vector v1 = oracle::random_vector(5, rng), v2 = oracle::random_vector(5, rng);
    EXPECT_LE(oracle::rel_err(lin.ce_hvp(w, b, v1 + v2), lin.ce_hvp(w, b, v1) + lin.ce_hvp(w, b, v2)), 1e-14);
    const double uhv = v1.dot(lin.ce_hvp(w, b, v2));
    const double vhu = v2.dot(lin.ce_hvp(w, b, v1));
    EXPECT_LE(oracle::rel_err(uhv, vhu), 1e-10);
  }
}

TEST(CeHvp, MlpMatchesFiniteDifferenceOfGradient) {
  RngStream rng(9, 0);
  const TanhMlp mlp(3, 6);
  const auto pm = static_cast<Eigen::Index>(mlp.param_dim());
  for (int it = 0; it < 50; ++it) {
    const Minibatch b = oracle::random_batch(10, 3, rng);
    const Vector w = oracle::random_vector(pm, rng, 0.5);
    const Vector v = oracle::random_vector(pm, rng);
    const double step = 1e-4;
    const Vector fd = (ce_grad(mlp, w + step * v, b) - ce_grad(mlp, w - step * v, b)) / (2 * step);
    EXPECT_LE(oracle::rel_err(mlp.ce_hvp(w, b, v), fd), 1e-4);
  }
}

TEST(CeHvp, DimensionMismatch) {
  const LogisticLinear lin(3);
  RngStream rng(1, 1);
  const Minibatch b = oracle::random_batch(4, 3, rng);
  EXPECT_THROW(lin.ce_hvp(Vector::Zero(3), b, Vector::Zero(2)), DimensionError);
}

TEST(Classifier, OneClassBatchesAreLegal) {
  const LogisticLinear lin(2);
  RowMatrix f(2, 2);
  f << 1, 2, 3, 4;
  const Minibatch pos(f, {1, 1});
  EXPECT_TRUE(std::isfinite(ce_loss(lin, Vector::Ones(2), pos)));
  EXPECT_TRUE(ce_grad(lin, Vector::Ones(2), pos).allFinite());
}
