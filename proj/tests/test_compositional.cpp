#include "fedcomp/fedcomp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace fedcomp;

namespace {

Minibatch symmetric_batch(std::size_t d) {
  return {RowMatrix::Constant(2, static_cast<Eigen::Index>(d), -0.4), {1, -1}};
}

}  // namespace

TEST(InnerConfig, RhoMustBePositive) {
  EXPECT_THROW(InnerConfig(0.0), ConfigError);
  EXPECT_THROW(InnerConfig(-1.0), ConfigError);
  EXPECT_DOUBLE_EQ(InnerConfig{}.rho, 0.1);
}

TEST(InnerG, TinyRhoIsIdentity) {
  RngStream rng(1, 0);
  const LogisticLinear lin(4);
  const ParamVector x(4, oracle::random_vector(6, rng));
  const ParamVector z = inner_g(lin, x, oracle::random_batch(8, 4, rng), InnerConfig(1e-300));
  EXPECT_EQ(z.flat(), x.flat());
}

TEST(InnerG, StationaryPointIsFixed) {
  const LogisticLinear lin(3);
  ParamVector x(3);
  x.w1() = 0.4;
  x.w2() = -2.0;
  EXPECT_EQ(inner_g(lin, x, symmetric_batch(3), InnerConfig(0.5)).flat(), x.flat());
}

TEST(InnerG, ScalarExample) {
  const LogisticLinear lin(1);
  RowMatrix f(1, 1);
  f << 2.0;
  ParamVector x(1);
  x[0] = 1.0;
  x.w1() = 0.3;
  x.w2() = 0.6;
  const ParamVector z = inner_g(lin, x, Minibatch(f, {1}), InnerConfig(0.1));
  EXPECT_NEAR(z[0], 1.0238405844044236, 1e-15);
  EXPECT_EQ(z.w1(), 0.3);
  EXPECT_EQ(z.w2(), 0.6);
}

TEST(InnerG, DisplacementEqualsScaledGradient) {
  RngStream rng(2, 0);
  const LogisticLinear lin(4);
  for (double rho : {1e-3, 0.1, 0.7}) {
    const ParamVector x(4, oracle::random_vector(6, rng));
    const Minibatch b = oracle::random_batch(10, 4, rng);
    const double moved = (inner_g(lin, x, b, InnerConfig(rho)).flat() - x.flat()).norm();
    EXPECT_NEAR(moved, rho * ce_grad(lin, x.w(), b).norm(), 1e-15);
  }
}

TEST(InnerG, EmptyBatchRejected) {
  const LogisticLinear lin(2);
  EXPECT_THROW(inner_g(lin, ParamVector(2), Minibatch{}, InnerConfig()), Error);
}

TEST(InnerJtvp, ZeroAndTinyRho) {
  RngStream rng(3, 0);
  const LogisticLinear lin(3);
  const ParamVector x(3, oracle::random_vector(5, rng));
  const Minibatch b = oracle::random_batch(6, 3, rng);
  EXPECT_EQ(inner_jtvp(lin, x, b, InnerConfig(0.2), Vector::Zero(5)), Vector::Zero(5));
  const Vector v = oracle::random_vector(5, rng);
  EXPECT_EQ(inner_jtvp(lin, x, b, InnerConfig(1e-300), v), v);
}

TEST(InnerJtvp, MatchesDenseFiniteDifferenceJacobian) {
  RngStream rng(4, 0);
  const LogisticLinear lin(4);
  for (int it = 0; it < 20; ++it) {
    const InnerConfig cfg(0.05 + rng.uniform());
    const ParamVector x(4, oracle::random_vector(6, rng));
    const Minibatch b = oracle::random_batch(9, 4, rng);
    const Vector v = oracle::random_vector(6, rng);
    const Eigen::MatrixXd jac = oracle::fd_jacobian(
        [&](const Vector& flat) { return inner_g(lin, ParamVector(4, flat), b, cfg).flat(); }, x.flat(), 1e-5);
    EXPECT_LE(oracle::rel_err(inner_jtvp(lin, x, b, cfg, v), Vector(jac.transpose() * v)), 1e-4);
  }
}

TEST(InnerJtvp, LinearInDirectionAndLeavesTrackerCoordinates) {
  RngStream rng(5, 0);
  const LogisticLinear lin(3);
  const InnerConfig cfg(0.3);
  const ParamVector x(3, oracle::random_vector(5, rng));
  const Minibatch b = oracle::random_batch(7, 3, rng);
  const Vector v1 = oracle::random_vector(5, rng), v2 = oracle::random_vector(5, rng);
  const Vector sum = inner_jtvp(lin, x, b, cfg, v1 + 2.0 * v2);
  EXPECT_LE(oracle::rel_err(sum, inner_jtvp(lin, x, b, cfg, v1) + 2.0 * inner_jtvp(lin, x, b, cfg, v2)), 1e-14);
  const Vector out = inner_jtvp(lin, x, b, cfg, v1);
  EXPECT_EQ(out[3], v1[3]);
  EXPECT_EQ(out[4], v1[4]);
  EXPECT_THROW(inner_jtvp(lin, x, b, cfg, Vector::Zero(4)), DimensionError);
}

TEST(CompGradX, ZeroAtAucStationaryOrigin) {
  RngStream rng(6, 0);
  const LogisticLinear lin(3);
  const Minibatch b = oracle::random_batch(8, 3, rng);
  const ParamVector x(3, oracle::random_vector(5, rng));
  const Vector g = comp_grad_x(lin, x, ParamVector(3), DualScalar(-1.0), b, b, InnerConfig(), Prior(0.4));
  EXPECT_EQ(g, Vector::Zero(5));
}

TEST(CompGradX, ChainRuleAgainstEndToEndDifference) {
  RngStream rng(7, 0);
  const LogisticLinear lin(4);
  for (int it = 0; it < 10; ++it) {
    const InnerConfig cfg(0.05 + 0.5 * rng.uniform());
    const Prior prior(0.1 + 0.8 * rng.uniform());
    const ParamVector x(4, oracle::random_vector(6, rng, 0.6));
    const double y = rng.normal();
    const Minibatch b = oracle::random_batch(13, 4, rng);
    const ParamVector h = inner_g(lin, x, b, cfg);
    const Vector analytic = comp_grad_x(lin, x, h, DualScalar(y), b, b, cfg, prior);
    const Vector fd = oracle::fd_gradient(
        [&](const Vector& flat) {
          return oracle::linear_auc_value(inner_g(lin, ParamVector(4, flat), b, cfg).flat(), y, b, prior.value());
        },
        x.flat(), 1e-5);
    EXPECT_LE(oracle::rel_err(analytic, fd), 1e-4);
  }
}

TEST(CompGradX, OuterGradientTakenAtTracker) {
  RngStream rng(8, 0);
  const LogisticLinear lin(3);
  const InnerConfig cfg(0.2);
  const Prior prior(0.3);
  const ParamVector x(3, oracle::random_vector(5, rng));
  const ParamVector h(3, oracle::random_vector(5, rng));
  const Minibatch b = oracle::random_batch(6, 3, rng);
  const Vector expected = inner_jtvp(lin, x, b, cfg, auc_loss(lin, h, DualScalar(0.5), b, prior).grad_z);
  EXPECT_EQ(comp_grad_x(lin, x, h, DualScalar(0.5), b, b, cfg, prior), expected);
}

TEST(CompGradX, LinearInOuterGradient) {
  const LogisticLinear lin(2);
  const InnerConfig cfg(0.1);
  const Prior prior(0.25);
  RowMatrix neg_only(1, 2);
  neg_only << 0.5, -1.5;
  RowMatrix pos_neg(2, 2);
  pos_neg << 0.0, 0.0, 0.5, -1.5;
  ParamVector x(2);
  x[0] = 0.2;
  x[1] = 0.1;
  ParamVector h = x;
  h.w1() = 0.0;
  // The positive row a = 0 scores 0 = w1 and y = -1 cancels the linear
  // terms, so it adds nothing and halves the batch-mean outer gradient.
  const Minibatch one(neg_only, {-1});
  const Minibatch two(pos_neg, {1, -1});
  const Vector g_one = comp_grad_x(lin, x, h, DualScalar(-1.0), one, one, cfg, prior);
  const Vector g_two = comp_grad_x(lin, x, h, DualScalar(-1.0), one, two, cfg, prior);
  EXPECT_LE(oracle::rel_err(g_one, 2.0 * g_two), 1e-15);
}

TEST(AucCompositionalAdapter, MatchesFreeFunctions) {
  RngStream rng(9, 0);
  const LogisticLinear lin(3);
  const AucCompositional<LogisticLinear> problem(lin, InnerConfig(0.2), Prior(0.3));
  const Vector x = oracle::random_vector(5, rng);
  const Minibatch b = oracle::random_batch(6, 3, rng);
  EXPECT_EQ(problem.dim(), 5u);
  EXPECT_EQ(problem.inner(x, b), inner_g(lin, ParamVector(3, x), b, InnerConfig(0.2)).flat());
  const auto og = problem.outer_grad(x, 0.4, b);
  const auto e = auc_loss(lin, ParamVector(3, x), DualScalar(0.4), b, Prior(0.3));
  EXPECT_EQ(og.grad_z, e.grad_z);
  EXPECT_EQ(og.grad_y, e.grad_y);
}
