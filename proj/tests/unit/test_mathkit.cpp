#include <gtest/gtest.h>

#include "exlab/errors.hpp"
#include "exlab/mathkit.hpp"
#include "oracles.hpp"

using namespace exlab;

TEST(KlGaussian1, IdentityIsZero) { EXPECT_EQ(kl_gaussian1({0, 1}, {0, 1}), 0.0); }

TEST(KlGaussian1, MeanShift) { EXPECT_NEAR(kl_gaussian1({1, 1}, {0, 1}), 0.5, 1e-15); }

TEST(KlGaussian1, VarianceRatioMatchesIntegration) {
  const double kl = kl_gaussian1({0, 2}, {0, 1});
  EXPECT_NEAR(kl, oracles::kl_by_integration(0, 2, 0, 1), 1e-8);
  EXPECT_NEAR(kl, 0.153426, 1e-6);
}

TEST(KlGaussian1, RandomPairsMatchIntegration) {
  RngStream rng(3, 0);
  for (int i = 0; i < 5; ++i) {
    const Gaussian1 p{rng.normal(), 0.2 + rng.uniform()};
    const Gaussian1 q{rng.normal(), 0.2 + rng.uniform()};
    EXPECT_NEAR(kl_gaussian1(p, q), oracles::kl_by_integration(p.mean, p.var, q.mean, q.var), 1e-7);
  }
}

TEST(KlGaussian1, RejectsBadVariance) {
  EXPECT_THROW(kl_gaussian1({0, 0}, {0, 1}), DomainError);
  EXPECT_THROW(kl_gaussian1({0, 1}, {0, -1}), DomainError);
}

TEST(KlGaussianN, IdenticalIsZero) {
  GaussianN p{Vec::Constant(3, 0.5), Mat::Identity(3, 3) * 2.0};
  EXPECT_NEAR(kl_gaussian_n(p, p), 0.0, 1e-12);
}

TEST(KlGaussianN, OneDimMatchesUnivariate) {
  GaussianN p{Vec::Constant(1, 0.3), Mat::Constant(1, 1, 1.7)};
  GaussianN q{Vec::Constant(1, -0.4), Mat::Constant(1, 1, 0.6)};
  EXPECT_NEAR(kl_gaussian_n(p, q), kl_gaussian1({0.3, 1.7}, {-0.4, 0.6}), 1e-14);
}

TEST(KlGaussianN, IndependentCoordinatesAdd) {
  GaussianN p{Vec::Zero(2), 2.0 * Mat::Identity(2, 2)};
  GaussianN q{Vec::Zero(2), Mat::Identity(2, 2)};
  EXPECT_NEAR(kl_gaussian_n(p, q), 2.0 * oracles::kl_by_integration(0, 2, 0, 1), 1e-8);
  EXPECT_NEAR(kl_gaussian_n(p, q), 0.306853, 1e-6);
}

TEST(KlGaussianN, Errors) {
  GaussianN p{Vec::Zero(2), Mat::Identity(2, 2)};
  GaussianN q{Vec::Zero(1), Mat::Identity(1, 1)};
  EXPECT_THROW(kl_gaussian_n(p, q), DimensionError);
  GaussianN bad{Vec::Zero(2), Mat::Zero(2, 2)};
  EXPECT_THROW(kl_gaussian_n(p, bad), FactorizationError);
}

TEST(KlProperties, NonNegativeAndIdentity) {
  RngStream rng(11, 0);
  double worst = 0.0;
  double self = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Gaussian1 p{3 * rng.normal(), 0.01 + 5 * rng.uniform()};
    const Gaussian1 q{3 * rng.normal(), 0.01 + 5 * rng.uniform()};
    worst = std::min(worst, kl_gaussian1(p, q));
    self = std::max(self, std::abs(kl_gaussian1(p, p)));
    if (i % 10 == 0) {
      const Mat a = oracles::random_spd(3, 50.0, rng);
      const Mat b = oracles::random_spd(3, 50.0, rng);
      const GaussianN pn{rng.normal_vec(3), a};
      const GaussianN qn{rng.normal_vec(3), b};
      worst = std::min(worst, kl_gaussian_n(pn, qn));
      self = std::max(self, std::abs(kl_gaussian_n(pn, pn)));
    }
  }
  EXPECT_GE(worst, -1e-12);
  EXPECT_LE(self, 1e-12);
}

TEST(FitGaussian, TwoSamples) {
  std::vector<Vec> s{Vec::Constant(1, 0.0), Vec::Constant(1, 2.0)};
  const auto g = fit_gaussian(s);
  EXPECT_DOUBLE_EQ(g.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(g.cov(0, 0), 2.0);
}

TEST(FitGaussian, EqualSamplesNeedFloor) {
  std::vector<Vec> s(5, Vec::Constant(2, 1.5));
  EXPECT_THROW(fit_gaussian(s), FactorizationError);
  const auto g = fit_gaussian(s, {1e-12});
  EXPECT_EQ(g.mean, s.front());
}

TEST(FitGaussian, LargeSample) {
  RngStream rng(5, 1);
  std::vector<Vec> s;
  for (int i = 0; i < 100000; ++i) s.push_back(Vec::Constant(1, 3.0 + 2.0 * rng.normal()));
  const auto g = fit_gaussian(s);
  EXPECT_NEAR(g.mean(0), 3.0, 0.05);
  EXPECT_NEAR(g.cov(0, 0), 4.0, 0.1);
}

TEST(FitGaussian, TooFewSamples) {
  std::vector<Vec> s{Vec::Zero(2), Vec::Ones(2)};
  EXPECT_THROW(fit_gaussian(s), ContractError);
}

TEST(SpdSolve, Identity) {
  const Vec b = Vec::LinSpaced(4, -1, 2);
  EXPECT_EQ(spd_solve(Mat::Identity(4, 4), b), b);
  EXPECT_TRUE(spd_solve(Mat(2.0 * Mat::Identity(4, 4)), b).isApprox(b / 2.0, 1e-15));
}

TEST(SpdSolve, MatchesGaussJordan) {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + trial % 8;
    const Mat a = oracles::random_spd(d, 1e4, rng);
    const Vec b = rng.normal_vec(static_cast<std::size_t>(d));
    const Vec x = spd_solve(a, b);
    EXPECT_LE((x - oracles::gauss_jordan_inverse(a) * b).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, x.norm()));
    EXPECT_LE((a * x - b).cwiseAbs().maxCoeff(), 1e-9 * b.cwiseAbs().maxCoeff());
  }
}

TEST(SpdSolve, RejectsNonPd) {
  Mat a(2, 2);
  a << 1, 2, 2, 1;
  EXPECT_THROW(spd_solve(a, Vec(Vec::Ones(2))), FactorizationError);
}

TEST(RngStream, Reproducible) {
  RngStream a(42, 9);
  RngStream b(42, 9);
  bool same = true;
  for (int i = 0; i < 1000000; ++i) same = same && a.next_u64() == b.next_u64();
  EXPECT_TRUE(same);
  RngStream c(42, 9);
  RngStream d(42, 9);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(c.normal(), d.normal());
}

TEST(RngStream, SplitIgnoresConsumption) {
  RngStream a(1, 2);
  RngStream b(1, 2);
  for (int i = 0; i < 17; ++i) b.normal();
  RngStream ca = a.split(5);
  RngStream cb = b.split(5);
  EXPECT_EQ(ca.next_u64(), cb.next_u64());
  EXPECT_NE(a.split(5).next_u64(), a.split(6).next_u64());
  EXPECT_NE(RngStream(1, 2).next_u64(), RngStream(1, 3).next_u64());
}

TEST(Summarize, MeanAndStdError) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto e = summarize(v);
  EXPECT_DOUBLE_EQ(e.value, 2.5);
  EXPECT_NEAR(e.std_error, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(e.n, 4u);
}
