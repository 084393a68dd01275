#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "atbptt/lrha.hpp"
#include "test_util.hpp"

namespace lr = atbptt::lrha;
using atbptt::Rng;

namespace {

lr::HvpOperator dense_operator(const Eigen::MatrixXd& h) {
  return [h](std::span<const double> v, std::span<double> out) {
    Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = h * x;
  };
}

// Random symmetric p x p with prescribed eigenvalues (rest zero).
Eigen::MatrixXd symmetric_with_spectrum(std::size_t p, const std::vector<double>& eig, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd g(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < eig.size(); ++i) d[static_cast<Eigen::Index>(i)] = eig[i];
  return q * d.asDiagonal() * q.transpose();
}

// H~ materialized column by column from apply().
Eigen::MatrixXd materialize(const lr::LowRankHessian& h) {
  const auto p = static_cast<Eigen::Index>(h.p());
  Eigen::MatrixXd out(p, p);
  std::vector<double> e(h.p(), 0.0);
  for (Eigen::Index j = 0; j < p; ++j) {
    e[static_cast<std::size_t>(j)] = 1.0;
    auto col = h.apply(e);
    out.col(j) = Eigen::Map<Eigen::VectorXd>(col.data(), p);
    e[static_cast<std::size_t>(j)] = 0.0;
  }
  return out;
}

}  // namespace

TEST(AdaptiveRank, Examples) {
  EXPECT_EQ(lr::adaptive_rank(3.0, 3.0, 4, 20), 20u);
  EXPECT_EQ(lr::adaptive_rank(0.0, 3.0, 4, 20), 4u);
  EXPECT_EQ(lr::adaptive_rank(0.35, 1.0, 4, 20), 7u);
  EXPECT_EQ(lr::adaptive_rank(5.0, 3.0, 4, 20), 20u);  // current above running max
  EXPECT_EQ(lr::adaptive_rank(1.0, 0.0, 4, 20), 20u);  // empty history
  EXPECT_THROW(lr::adaptive_rank(1.0, 1.0, 9, 8), atbptt::ConfigError);
}

TEST(AdaptiveRank, MatchesDirectEvaluation) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::size_t kmin = 1 + rng.below(5), kmax = kmin + rng.below(40);
    const double run = rng.uniform() * 10.0, cur = rng.uniform() * run;
    const auto direct = static_cast<std::size_t>(std::floor(static_cast<double>(kmax) * cur / run));
    EXPECT_EQ(lr::adaptive_rank(cur, run, kmin, kmax), std::max(kmin, std::min(kmax, direct)));
  }
}

TEST(AdaptiveRank, KMaxIsTenthOfP) {
  lr::LrhaConfig cfg;
  EXPECT_EQ(lr::k_max_for(1000, cfg), 100u);
  EXPECT_EQ(lr::k_max_for(20, cfg), 4u);  // floored at k_min
}

TEST(Factorize, DiagonalSpectrum) {
  const std::size_t p = 12;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  h(0, 0) = 5, h(1, 1) = 3, h(2, 2) = 1;
  Rng rng(1);
  lr::HvpCounter c;
  auto f = lr::factorize(dense_operator(h), p, 3, rng, c);
  EXPECT_NEAR(f.sigma[0], 5.0, 1e-8);
  EXPECT_NEAR(f.sigma[1], 3.0, 1e-8);
  EXPECT_NEAR(f.sigma[2], 1.0, 1e-8);
  auto v = atbptt::testing::random_vector(p, 7);
  Eigen::Map<Eigen::VectorXd> vv(v.data(), p);
  Eigen::VectorXd hv = h * vv;
  auto approx = f.apply(v);
  EXPECT_LE((Eigen::Map<Eigen::VectorXd>(approx.data(), p) - hv).norm() / hv.norm(), 1e-8);
}

TEST(Factorize, ZeroOperator) {
  const std::size_t p = 10;
  Rng rng(2);
  lr::HvpCounter c;
  auto f = lr::factorize(dense_operator(Eigen::MatrixXd::Zero(p, p)), p, 4, rng, c);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(f.sigma[i], 0.0);
  auto out = f.apply(atbptt::testing::random_vector(p, 1));
  for (double x : out) EXPECT_EQ(x, 0.0);
}

TEST(Factorize, HvpCountIsSixK) {
  const std::size_t p = 40;
  auto h = symmetric_with_spectrum(p, {4, 3, 2, 1, 0.5}, 5);
  for (std::size_t k : {1u, 3u, 8u}) {
    Rng rng(k);
    lr::HvpCounter c;
    lr::factorize(dense_operator(h), p, k, rng, c);
    EXPECT_EQ(c.count, 6 * k);
  }
}

TEST(Factorize, OrthonormalBasisAndSortedSpectrum) {
  const std::size_t p = 50;
  auto h = symmetric_with_spectrum(p, {9, -4, 3, 2.5, 1, 0.1, 0.05}, 6);
  Rng rng(4);
  lr::HvpCounter c;
  auto f = lr::factorize(dense_operator(h), p, 10, rng, c);
  EXPECT_LE((f.q.transpose() * f.q - Eigen::MatrixXd::Identity(10, 10)).norm(), 1e-10);
  for (Eigen::Index i = 0; i < 10; ++i) {
    EXPECT_GE(f.sigma[i], 0.0);
    if (i) EXPECT_LE(f.sigma[i], f.sigma[i - 1]);
  }
}

TEST(Factorize, ExactRankRecoveryAndMemoryBound) {
  Rng pick(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t p = 20 + pick.below(181);
    const std::size_t k = 2 + pick.below(p / 4 - 1);
    const std::size_t r = 1 + pick.below(k);
    std::vector<double> eig(r);
    for (auto& e : eig) e = (pick.uniform() < 0.3 ? -1.0 : 1.0) * (0.1 + 5.0 * pick.uniform());
    auto h = symmetric_with_spectrum(p, eig, 100 + static_cast<std::uint64_t>(trial));
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    lr::HvpCounter c;
    auto f = lr::factorize(dense_operator(h), p, k, rng, c);
    auto ht = materialize(f);
    EXPECT_LE((ht - h).norm() / h.norm(), 1e-8) << "trial " << trial << " p=" << p << " k=" << k << " r=" << r;
    EXPECT_EQ(c.count, 6 * k);
    EXPECT_LE(c.peak_extra_floats, 2 * p * k + k * k) << "p=" << p << " k=" << k;
    EXPECT_EQ(c.live_floats, 0u);
  }
}

TEST(Factorize, ProjectionIdentityHolds) {
  const std::size_t p = 60;
  auto h = symmetric_with_spectrum(p, {10, 8, 6, 5, 4, 3, 2, 1.5, 1, 0.7, 0.5, 0.3}, 9);
  Rng rng(3);
  lr::HvpCounter c;
  auto f = lr::factorize(dense_operator(h), p, 6, rng, c);
  Eigen::MatrixXd qq = f.q * f.q.transpose();
  Eigen::MatrixXd target = qq * h * qq;
  EXPECT_LE((materialize(f) - target).norm() / target.norm(), 1e-8);
}

TEST(Factorize, DecayBoundStatistical) {
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng pick(500 + static_cast<std::uint64_t>(trial));
    const std::size_t p = 30 + pick.below(40), k = 3 + pick.below(6);
    std::vector<double> eig(p);
    const double decay = 0.3 + 0.5 * pick.uniform();
    for (std::size_t i = 0; i < p; ++i) eig[i] = 10.0 * std::pow(decay, static_cast<double>(i));
    auto h = symmetric_with_spectrum(p, eig, 900 + static_cast<std::uint64_t>(trial));
    Rng rng(77 + static_cast<std::uint64_t>(trial));
    lr::HvpCounter c;
    auto f = lr::factorize(dense_operator(h), p, k, rng, c);
    auto v = atbptt::testing::random_vector(p, 31 + static_cast<std::uint64_t>(trial));
    Eigen::Map<Eigen::VectorXd> vv(v.data(), static_cast<Eigen::Index>(p));
    Eigen::VectorXd hv = h * vv;
    auto a = f.apply(v);
    const double err = (Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(p)) - hv).norm() / hv.norm();
    if (err > 10.0 * eig[k] / eig[0]) ++violations;
  }
  EXPECT_LE(violations, 5);
}

TEST(Factorize, NonFiniteOperatorFails) {
  auto bad = [](std::span<const double>, std::span<double> out) {
    for (auto& x : out) x = std::nan("");
  };
  Rng rng(1);
  lr::HvpCounter c;
  EXPECT_THROW(lr::factorize(bad, 8, 2, rng, c), lr::FactorizationError);
  EXPECT_EQ(c.live_floats, 0u);
  EXPECT_THROW(lr::factorize(bad, 8, 9, rng, c), atbptt::ConfigError);
}

TEST(ApplyDamped, AlphaZeroIsIdentity) {
  const std::size_t p = 15;
  auto h = symmetric_with_spectrum(p, {2, 1}, 2);
  Rng rng(1);
  lr::HvpCounter c;
  auto f = lr::factorize(dense_operator(h), p, 3, rng, c);
  auto v = atbptt::testing::random_vector(p, 3);
  EXPECT_EQ(lr::apply_damped(f, 0.0, v), v);
}

TEST(ApplyDamped, ProjectionAlgebra) {
  lr::LowRankHessian f;
  const std::size_t p = 9, k = 3;
  Eigen::MatrixXd g = Eigen::MatrixXd::Random(p, k);
  f.q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ() * Eigen::MatrixXd::Identity(p, k);
  f.u = Eigen::MatrixXd::Identity(k, k);
  f.v = Eigen::MatrixXd::Identity(k, k);
  f.sigma = Eigen::VectorXd::Ones(k);
  Eigen::VectorXd x = f.q * Eigen::Vector3d(0.3, -1.2, 2.0);
  auto out = lr::apply_damped(f, 1.0, std::span<const double>(x.data(), p));
  for (double v : out) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST(ApplyDamped, MatchesDenseOnRankFive) {
  const std::size_t p = 60;
  auto h = symmetric_with_spectrum(p, {3, -2, 1.5, 1, 0.5}, 13);
  Rng rng(5);
  lr::HvpCounter c;
  auto f = lr::factorize(dense_operator(h), p, 5, rng, c);
  auto v = atbptt::testing::random_vector(p, 8);
  Eigen::Map<Eigen::VectorXd> vv(v.data(), p);
  Eigen::VectorXd expect = vv - 0.3 * (h * vv);
  lr::HvpCounter mc;
  auto out = lr::apply_damped(f, 0.3, v, &mc);
  EXPECT_LE((Eigen::Map<Eigen::VectorXd>(out.data(), p) - expect).norm() / expect.norm(), 1e-8);
  EXPECT_EQ(mc.madds, lr::damped_apply_madds(p, 5));
}

TEST(ApplyDamped, DimensionMismatch) {
  lr::LowRankHessian f;
  f.q = Eigen::MatrixXd::Identity(4, 2);
  f.u = f.v = Eigen::MatrixXd::Identity(2, 2);
  f.sigma = Eigen::VectorXd::Ones(2);
  std::vector<double> v(5, 1.0);
  EXPECT_THROW(lr::apply_damped(f, 0.1, v), atbptt::ShapeError);
}
