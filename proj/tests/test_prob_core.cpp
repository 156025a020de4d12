#include "infoctrl/prob_core.hpp"

#include "generators.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace infoctrl;

namespace {

const Labels kBin = make_labels("b", 2);

FiniteDistribution bern(double p) { return FiniteDistribution(kBin, (Vector(2) << 1.0 - p, p).finished()); }

StochasticKernel bsc(double eps) {
  return StochasticKernel(kBin, kBin, (Matrix(2, 2) << 1.0 - eps, eps, eps, 1.0 - eps).finished());
}

}  // namespace

TEST(FiniteDistribution, RejectsBadMass) {
  EXPECT_THROW(FiniteDistribution(kBin, (Vector(2) << 0.5, 0.49).finished()), ValidationError);
  EXPECT_THROW(FiniteDistribution(kBin, (Vector(2) << 1.1, -0.1).finished()), ValidationError);
  EXPECT_THROW(FiniteDistribution(make_labels("x", 3), (Vector(2) << 0.5, 0.5).finished()), DimensionError);
  EXPECT_NO_THROW(FiniteDistribution(kBin, (Vector(2) << 0.5, 0.5 + 1e-13).finished()));
}

TEST(StochasticKernel, RowsMustBeDistributions) {
  EXPECT_THROW(StochasticKernel(kBin, kBin, (Matrix(2, 2) << 0.5, 0.4, 0.5, 0.5).finished()), ValidationError);
  EXPECT_THROW(StochasticKernel(kBin, make_labels("y", 3), Matrix::Constant(2, 2, 0.5)), DimensionError);
}

TEST(RelativeEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(relative_entropy(bern(0.5), bern(0.5)), 0.0);
  EXPECT_NEAR(relative_entropy(bern(0.5), bern(0.25)), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  EXPECT_TRUE(std::isinf(relative_entropy(bern(0.5), bern(0.0))));
  EXPECT_DOUBLE_EQ(relative_entropy(bern(0.0), bern(0.5)), std::log(2.0));
}

TEST(RelativeEntropy, MismatchedAtomsThrow) {
  const FiniteDistribution other(Labels{"p", "q"}, (Vector(2) << 0.5, 0.5).finished());
  EXPECT_THROW(relative_entropy(bern(0.5), other), DimensionError);
}

TEST(MutualInformation, KnownValues) {
  EXPECT_DOUBLE_EQ(mutual_information(bern(0.5), StochasticKernel::constant(kBin, bern(0.3))), 0.0);
  EXPECT_NEAR(mutual_information(bern(0.5), bsc(0.25)), std::log(2.0) - oracle::binary_entropy(0.25), 1e-14);
  EXPECT_NEAR(mutual_information(bern(0.5), bsc(0.25)), 0.130812, 1e-6);
  EXPECT_NEAR(mutual_information(bern(0.5), StochasticKernel::identity(kBin)), std::log(2.0), 1e-15);
}

TEST(MarginalAndJoint, KnownValues) {
  const Labels three = make_labels("x", 3);
  testgen::Rng rng(7);
  const auto k = rng.kernel(three, kBin);
  const auto [out, joint] = marginal_and_joint(FiniteDistribution::point_mass(three, 1), k);
  EXPECT_DOUBLE_EQ(joint.matrix().row(0).sum(), 0.0);
  EXPECT_DOUBLE_EQ(joint.matrix().row(2).sum(), 0.0);
  EXPECT_NEAR((out.probs() - k.matrix().row(1).transpose()).norm(), 0.0, 1e-15);

  const auto [out2, joint2] = marginal_and_joint(bern(0.5), StochasticKernel::identity(kBin));
  EXPECT_TRUE(joint2.matrix().isApprox((Matrix(2, 2) << 0.5, 0.0, 0.0, 0.5).finished()));

  const auto [out3, joint3] = marginal_and_joint(bern(0.3), bsc(0.1));
  EXPECT_NEAR(out3[1], 0.34, 1e-15);
}

TEST(MarginalAndJoint, MarginalsReproduceInputs) {
  testgen::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Labels in = make_labels("x", 1 + rng.index(6));
    const Labels out = make_labels("y", 1 + rng.index(6));
    const auto mu = rng.distribution(in, true);
    const auto k = rng.kernel(in, out, true);
    const auto [marg, joint] = marginal_and_joint(mu, k);
    EXPECT_LE((joint.input_marginal().probs() - mu.probs()).lpNorm<Eigen::Infinity>(), 1e-15);
    EXPECT_LE((joint.output_marginal().probs() - marg.probs()).lpNorm<Eigen::Infinity>(), 1e-15);
  }
}

TEST(InvariantDistribution, KnownChains) {
  const Labels three = make_labels("x", 3);
  const Matrix doubly = (Matrix(3, 3) << 0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2).finished();
  const auto r1 = invariant_distribution(StochasticKernel(three, three, doubly));
  EXPECT_TRUE(r1.unique);
  EXPECT_LE((r1.distribution.probs().array() - 1.0 / 3.0).abs().maxCoeff(), 1e-14);

  const auto r2 = invariant_distribution(StochasticKernel::identity(three));
  EXPECT_FALSE(r2.unique);
  EXPECT_LE(r2.residual, 1e-10);

  const auto r3 = invariant_distribution(StochasticKernel(kBin, kBin, (Matrix(2, 2) << 0.9, 0.1, 0.2, 0.8).finished()));
  EXPECT_TRUE(r3.unique);
  EXPECT_NEAR(r3.distribution[0], 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(r3.distribution[1], 1.0 / 3.0, 1e-14);
}

TEST(InvariantDistribution, ReducibleChainFlagged) {
  const Labels four = make_labels("x", 4);
  Matrix p = Matrix::Zero(4, 4);
  p.block(0, 0, 2, 2) << 0.5, 0.5, 0.3, 0.7;
  p.block(2, 2, 2, 2) << 0.1, 0.9, 0.6, 0.4;
  EXPECT_FALSE(invariant_distribution(StochasticKernel(four, four, p)).unique);
}

TEST(InvariantDistribution, NonSquareThrows) {
  EXPECT_THROW(invariant_distribution(StochasticKernel::constant(make_labels("x", 3), bern(0.5))), DimensionError);
}

TEST(InvariantDistribution, RandomChainsResidual) {
  testgen::Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const Labels atoms = make_labels("x", 1 + rng.index(30));
    const auto k = rng.kernel(atoms, atoms, rng.coin());
    const auto res = invariant_distribution(k);
    EXPECT_LE(res.residual, 1e-10);
    if (res.unique) EXPECT_LE((res.distribution.probs() - oracle::stationary(k.matrix())).lpNorm<1>(), 1e-9);
  }
}

TEST(InvariantDistribution, LargeChainUsesIteration) {
  testgen::Rng rng(5);
  const Labels atoms = make_labels("x", 2100);
  const Matrix p = rng.stochastic(2100, 2100);
  const auto res = invariant_distribution(StochasticKernel(atoms, atoms, p));
  EXPECT_TRUE(res.unique);
  EXPECT_LE(res.residual, 1e-10);
  EXPECT_LE((res.distribution.probs() - oracle::stationary(p)).lpNorm<1>(), 1e-9);
}

// Property tests over hand-rolled random instances.

TEST(Properties, GibbsInequality) {
  testgen::Rng rng(101);
  for (int trial = 0; trial < 500; ++trial) {
    const Labels atoms = make_labels("x", 1 + rng.index(8));
    const auto mu = rng.distribution(atoms, true);
    const auto nu = rng.distribution(atoms, rng.coin());
    EXPECT_GE(relative_entropy(mu, nu), 0.0);
    EXPECT_EQ(relative_entropy(mu, mu), 0.0);
  }
}

TEST(Properties, DefinitionConsistency) {
  testgen::Rng rng(102);
  for (int trial = 0; trial < 300; ++trial) {
    const Labels in = make_labels("x", 1 + rng.index(7));
    const Labels out = make_labels("y", 1 + rng.index(7));
    const auto mu = rng.distribution(in, true);
    const auto k = rng.kernel(in, out, true);
    const auto [marg, joint] = marginal_and_joint(mu, k);
    const double via_joint = relative_entropy(joint, product(joint.input_marginal(), marg));
    EXPECT_NEAR(mutual_information(mu, k), via_joint, 1e-12);
    EXPECT_NEAR(mutual_information(mu, k), oracle::mutual_information(mu.probs(), k.matrix()), 1e-12);
  }
}

TEST(Properties, InformationBoundedByEntropies) {
  testgen::Rng rng(103);
  auto entropy = [](const Vector& p) {
    double h = 0.0;
    for (double v : p) h -= v > 0.0 ? v * std::log(v) : 0.0;
    return h;
  };
  for (int trial = 0; trial < 300; ++trial) {
    const Labels in = make_labels("x", 1 + rng.index(7));
    const Labels out = make_labels("y", 1 + rng.index(7));
    const auto mu = rng.distribution(in, true);
    const auto k = rng.kernel(in, out, true);
    const double i = mutual_information(mu, k);
    EXPECT_GE(i, 0.0);
    EXPECT_LE(i, entropy(mu.probs()) + 1e-12);
    EXPECT_LE(i, entropy(k.matrix().transpose() * mu.probs()) + 1e-12);
  }
}

TEST(Properties, VariationalCharacterization) {
  testgen::Rng rng(104);
  for (int trial = 0; trial < 20; ++trial) {
    const Labels in = make_labels("x", 2 + rng.index(5));
    const Labels out = make_labels("y", 2 + rng.index(5));
    const auto mu = rng.distribution(in);
    const auto k = rng.kernel(in, out);
    const double info = mutual_information(mu, k);
    const auto [marg, joint] = marginal_and_joint(mu, k);
    EXPECT_NEAR(relative_entropy(joint, product(mu, marg)), info, 1e-12);
    for (int j = 0; j < 100; ++j) {
      const auto nu = rng.distribution(out);
      EXPECT_GE(relative_entropy(joint, product(mu, nu)), info - 1e-12);
    }
  }
}

TEST(Properties, DataProcessing) {
  testgen::Rng rng(105);
  for (int trial = 0; trial < 300; ++trial) {
    const Labels x = make_labels("x", 1 + rng.index(6));
    const Labels y = make_labels("y", 1 + rng.index(6));
    const Labels z = make_labels("z", 1 + rng.index(6));
    const auto mu = rng.distribution(x, true);
    const auto k = rng.kernel(x, y, true);
    const auto l = rng.kernel(y, z, true);
    EXPECT_LE(mutual_information(mu, compose(k, l)), mutual_information(mu, k) + 1e-12);
  }
}

TEST(Properties, InvariantResidualOnRandomChains) {
  testgen::Rng rng(106);
  for (int trial = 0; trial < 100; ++trial) {
    const Labels atoms = make_labels("x", 1 + rng.index(12));
    const auto res = invariant_distribution(rng.kernel(atoms, atoms, true));
    EXPECT_LE(res.residual, 1e-10);
  }
}
