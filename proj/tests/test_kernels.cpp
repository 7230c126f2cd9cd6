#include <gtest/gtest.h>

#include <random>

#include "kstpp/kernels.hpp"
#include "oracles.hpp"

using namespace kstpp;

TEST(EvalKernel, ClosedForms) {
  const auto se = KernelSpec::make(KernelFamily::SquaredExponential, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(eval_kernel(se, 0.3, 0.3), 1.0);
  EXPECT_NEAR(eval_kernel(se, 0.0, 1.0), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(eval_kernel(se, 0.0, 1.0), 0.606531, 1e-6);
  const auto mat = KernelSpec::make(KernelFamily::Matern52, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(eval_kernel(mat, 2.0, 2.0), 1.0);
  // sqrt(5) r / l = sqrt(5) at r = 1
  const double s = std::sqrt(5.0);
  EXPECT_NEAR(eval_kernel(mat, 0.0, 1.0), (1.0 + s + 5.0 / 3.0) * std::exp(-s), 1e-15);
}

TEST(EvalKernel, LengthscaleDerivativeMatchesFiniteDifference) {
  for (auto fam : {KernelFamily::SquaredExponential, KernelFamily::Matern52}) {
    KernelSpec spec{fam, std::log(0.7), std::log(1.3)};
    for (double r : {0.0, 0.1, 0.5, 1.7}) {
      const double h = 1e-6;
      KernelSpec up = spec, dn = spec;
      up.log_lengthscale += h;
      dn.log_lengthscale -= h;
      const double fd = (eval_kernel(up, 0.0, r) - eval_kernel(dn, 0.0, r)) / (2 * h);
      EXPECT_NEAR(eval_kernel_dlog_lengthscale(spec, 0.0, r), fd, 1e-8);
    }
  }
}

TEST(KernelSpec, RejectsNonPositive) {
  EXPECT_THROW(KernelSpec::make(KernelFamily::SquaredExponential, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(KernelSpec::make(KernelFamily::SquaredExponential, 1.0, -1.0), std::invalid_argument);
}

TEST(BuildOperator, GramEntriesAndJitter) {
  const auto spec = KernelSpec::make(KernelFamily::SquaredExponential, 1.0, 1.0);
  const auto op = build_operator(spec, {0.0, 1.0, 2.0});
  EXPECT_NEAR(op.gram()(0, 2), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(op.gram()(0, 2), 0.135335, 1e-6);
  EXPECT_NEAR(op.gram()(1, 1), 1.0 + 1e-6, 1e-15);
  const auto rec = matmul(op.factor().lower(), op.factor().lower().transposed());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(rec.data()[i], op.gram().data()[i], 1e-12);
}

TEST(BuildOperator, NearSingularGramStillFactors) {
  // l = 1e6 on {0, 1}: Gram ~ all ones; the jitter alone keeps it definite.
  const auto spec = KernelSpec::make(KernelFamily::SquaredExponential, 1e6, 1.0);
  const auto op = build_operator(spec, {0.0, 1.0}, 1e-6);
  // condition number of [[1+j, 1], [1, 1+j]] is (2 + j) / j
  const double cond = (2.0 + 1e-6) / 1e-6;
  EXPECT_LT(cond, 1e7);
  EXPECT_GT(op.factor().lower()(1, 1), 0.0);
  EXPECT_NEAR(op.gram()(0, 1), 1.0, 1e-12);
}

TEST(BuildOperator, RejectsBadNodes) {
  const auto spec = KernelSpec::make(KernelFamily::SquaredExponential, 1.0, 1.0);
  EXPECT_THROW(build_operator(spec, {0.0, 2.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(build_operator(spec, {0.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(build_operator(spec, {0.0}), std::invalid_argument);
}

TEST(BuildOperator, FailureAdvisesJitterAndNamesAxis) {
  const auto spec = KernelSpec::make(KernelFamily::SquaredExponential, 1e9, 1.0);  // Gram rounds to all ones
  try {
    build_operator(spec, uniform_nodes(0.0, 1.0, 6), 0.0, "lag");
    FAIL() << "expected failure";
  } catch (const NotPositiveDefinite& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("lag"), std::string::npos);
    EXPECT_NE(msg.find("jitter"), std::string::npos);
  }
}

TEST(CrossWeights, ReproduceNodeIndicatorAsJitterVanishes) {
  const auto spec = KernelSpec::make(KernelFamily::SquaredExponential, 0.5, 1.0);
  const std::vector<double> nodes{0.0, 1.0, 2.0, 3.0};
  double prev = 1.0;
  for (double jitter : {1e-6, 1e-8, 1e-10}) {
    const auto op = build_operator(spec, nodes, jitter);
    const auto w = cross_weights(op, nodes[2]);
    double dev = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) dev = std::max(dev, std::abs(w[j] - (j == 2 ? 1.0 : 0.0)));
    EXPECT_LT(dev, prev);
    prev = dev;
    if (jitter == 1e-10) {
      EXPECT_LT(dev, 1e-4);
    }
  }
}

TEST(CrossWeights, VarianceCancels) {
  const std::vector<double> nodes{0.0, 0.4, 0.9, 1.5};
  const auto a = build_operator(KernelSpec::make(KernelFamily::Matern52, 0.6, 1.0), nodes);
  const auto b = build_operator(KernelSpec::make(KernelFamily::Matern52, 0.6, 7.5), nodes);
  const auto wa = cross_weights(a, 0.77);
  const auto wb = cross_weights(b, 0.77);
  for (std::size_t j = 0; j < nodes.size(); ++j) EXPECT_NEAR(wa[j], wb[j], 1e-12);
}

TEST(CrossWeights, MidpointMatchesDenseSolve) {
  const auto spec = KernelSpec::make(KernelFamily::SquaredExponential, 0.8, 1.0);
  const auto nodes = uniform_nodes(0.0, 2.0, 5);
  const auto op = build_operator(spec, nodes);
  const double q = 0.75;  // midway between nodes 1 and 2
  oracle::Dense k = oracle::zeros(5, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) k[i][j] = oracle::se(nodes[i], nodes[j], 0.8, 1.0) + (i == j ? 1e-6 : 0.0);
  const auto inv = oracle::gauss_jordan_inverse(k);
  std::vector<double> kq(5);
  for (std::size_t j = 0; j < 5; ++j) kq[j] = oracle::se(q, nodes[j], 0.8, 1.0);
  const auto w = cross_weights(op, q);
  for (std::size_t j = 0; j < 5; ++j) {
    double e = 0.0;
    for (std::size_t i = 0; i < 5; ++i) e += kq[i] * inv[i][j];
    EXPECT_NEAR(w[j], e, 1e-8);
  }
  // residual form: w K = k(q, nodes)
  for (std::size_t j = 0; j < 5; ++j) {
    double r = 0.0;
    for (std::size_t i = 0; i < 5; ++i) r += w[i] * op.gram()(i, j);
    EXPECT_NEAR(r, kq[j], 1e-8);
  }
}

TEST(ProductKernel, SeparableConstructionMatchesJointKernel) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto k1 = KernelSpec::make(KernelFamily::SquaredExponential, 0.7, 1.5);
  const auto k2 = KernelSpec::make(KernelFamily::SquaredExponential, 1.3, 0.4);
  for (int i = 0; i < 50; ++i) {
    const double x = u(rng), y = u(rng), xp = u(rng), yp = u(rng);
    // the joint SE kernel with ARD lengthscales (0.7, 1.3) and variance 1.5 * 0.4
    const double joint = 0.6 * std::exp(-0.5 * ((x - xp) * (x - xp) / 0.49 + (y - yp) * (y - yp) / 1.69));
    EXPECT_NEAR(eval_kernel(k1, x, xp) * eval_kernel(k2, y, yp), joint, 1e-14);
  }
}

TEST(Gram, PositiveDefiniteAcrossTestedNodeSets) {
  for (auto fam : {KernelFamily::SquaredExponential, KernelFamily::Matern52})
    for (std::size_t n : {2u, 4u, 8u, 12u, 16u, 20u})
      for (double frac : {0.1, 0.25, 1.0}) {
        const auto spec = KernelSpec::make(fam, frac * 4.0, 1.0);
        EXPECT_NO_THROW(build_operator(spec, uniform_nodes(-2.0, 2.0, n)));
      }
}
