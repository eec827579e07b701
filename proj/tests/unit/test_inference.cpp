#include <algorithm>

#include <gtest/gtest.h>

#include "exlab/errors.hpp"
#include "exlab/inference.hpp"

using namespace exlab;
using namespace exlab::inference;

namespace {

blr::Trajectory context(const blr::BlrEnv& env, std::size_t s, std::uint64_t seed) {
  RngStream rng(seed, 0);
  return blr::sample_trajectory(env, s, rng);
}

class PointMass final : public PredictiveModel {
 public:
  std::size_t dim() const override { return 1; }
  std::string id() const override { return "point"; }
  std::unique_ptr<PredictiveSession> start() const override { return std::make_unique<Session>(); }

 private:
  struct Session final : PredictiveSession {
    std::size_t n = 0;
    Gaussian1 predict(const Vec&) override { return {0.0, 1e-18}; }
    void absorb(const Vec&, double) override { ++n; }
    std::size_t size() const override { return n; }
    std::unique_ptr<PredictiveSession> clone() const override { return std::make_unique<Session>(*this); }
  };
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(Statistic, OlsRecoversExactLine) {
  blr::Trajectory t{Mat(4, 2), Vec(4), std::nullopt};
  t.x << 1, 0, 0, 1, 1, 1, 2, -1;
  const Vec w = (Vec(2) << 0.5, -2.0).finished();
  t.y = t.x * w;
  EXPECT_LE((compute_statistic(StatKind::ols, t) - w).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_DOUBLE_EQ(compute_statistic(StatKind::empirical_mean, t)(0), t.y.mean());
  EXPECT_THROW(compute_statistic(StatKind::ols, t.prefix(2)), ContractError);
}

TEST(Quantile, Type7) {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[static_cast<std::size_t>(i)] = 100 - i;
  EXPECT_NEAR(quantile(v, 0.05), 5.95, 1e-12);
  EXPECT_NEAR(quantile(v, 0.95), 95.05, 1e-12);
  EXPECT_EQ(quantile(v, 0.0), 1.0);
  EXPECT_EQ(quantile(v, 1.0), 100.0);
}

TEST(CredibleInterval, Examples) {
  BootstrapDraws d;
  for (int i = 1; i <= 100; ++i) d.values.push_back(Vec::Constant(1, i));
  const auto ci = credible_interval(d, 0.9);
  EXPECT_NEAR(ci[0].lo, 5.95, 1e-12);
  EXPECT_NEAR(ci[0].hi, 95.05, 1e-12);

  BootstrapDraws c;
  c.values.assign(30, Vec::Constant(2, 1.25));
  for (const auto& iv : credible_interval(c, 0.5)) {
    EXPECT_EQ(iv.lo, 1.25);
    EXPECT_EQ(iv.hi, 1.25);
  }
  c.values.resize(19);
  EXPECT_THROW(credible_interval(c, 0.9), ContractError);
}

TEST(ArBootstrap, DegenerateModel) {
  const auto env = blr::BlrEnv::isotropic(1);
  const PointMass model;
  const auto draws = ar_bootstrap(model, env, blr::Trajectory{Mat(0, 1), Vec(0), std::nullopt}, 50, 40,
                                  StatKind::empirical_mean, RngStream(1, 0));
  ASSERT_EQ(draws.size(), 40u);
  for (const auto& v : draws.values) EXPECT_LE(std::abs(v(0)), 1e-6);
}

TEST(ArBootstrap, ConfigEchoAndDeterminism) {
  const auto env = blr::BlrEnv::isotropic(2);
  const OraclePredictive oracle(env);
  const auto ctx = context(env, 5, 2);
  const auto a = ar_bootstrap(oracle, env, ctx, 30, 25, StatKind::ols, RngStream(3, 7));
  const auto b = ar_bootstrap(oracle, env, ctx, 30, 25, StatKind::ols, RngStream(3, 7));
  EXPECT_EQ(a.config.s, 5u);
  EXPECT_EQ(a.config.horizon, 30u);
  EXPECT_EQ(a.config.replicates, 25u);
  EXPECT_EQ(a.config.seed, 3u);
  EXPECT_EQ(a.config.stream, 7u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.values[i], b.values[i]);
}

TEST(ArBootstrap, ReversedStreamsGiveSameMultiset) {
  const auto env = blr::BlrEnv::isotropic(1);
  const OraclePredictive oracle(env);
  const auto ctx = context(env, 4, 4);
  const RngStream rng(5, 0);
  const std::size_t b = 30;
  const auto draws = ar_bootstrap(oracle, env, ctx, 40, b, StatKind::ols, rng);
  std::vector<double> forward_vals, reversed;
  for (const auto& v : draws.values) forward_vals.push_back(v(0));
  for (std::size_t i = 0; i < b; ++i) {
    const auto path = generate_path(oracle, env, ctx, 40, Vec::Ones(1), rng.split(b - 1 - i));
    reversed.push_back(compute_statistic(StatKind::ols, path.full)(0));
  }
  std::sort(forward_vals.begin(), forward_vals.end());
  std::sort(reversed.begin(), reversed.end());
  EXPECT_EQ(forward_vals, reversed);
}

TEST(ArBootstrap, Errors) {
  const auto env = blr::BlrEnv::isotropic(1);
  const OraclePredictive oracle(env);
  const auto ctx = context(env, 5, 1);
  EXPECT_THROW(ar_bootstrap(oracle, env, ctx, 5, 10, StatKind::ols, RngStream(0, 0)), ContractError);
  EXPECT_THROW(ar_bootstrap(oracle, env, ctx, 10, 0, StatKind::ols, RngStream(0, 0)), ContractError);
}

TEST(PosteriorGap, SelfDrawsAreClose) {
  const auto env = blr::BlrEnv::isotropic(2);
  const auto post = context_posterior(env, context(env, 6, 6));
  const Mat l = cholesky_lower(post.cov);
  RngStream rng(7, 0);
  BootstrapDraws d;
  d.config.stat = StatKind::ols;
  for (int i = 0; i < 10000; ++i) d.values.push_back(post.mean + l * rng.normal_vec(2));
  EXPECT_LE(posterior_gap(d, post), 0.01);
  d.config.stat = StatKind::empirical_mean;
  EXPECT_THROW(posterior_gap(d, post), ContractError);
}

TEST(PosteriorGap, OracleBootstrapIsConsistent) {
  const auto env = blr::BlrEnv::isotropic(1);
  const OraclePredictive oracle(env);
  std::vector<double> gaps;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const auto ctx = context(env, 8, 100 + i);
    const auto draws = ar_bootstrap(oracle, env, ctx, 200, 500, StatKind::ols, RngStream(8, i));
    gaps.push_back(posterior_gap(draws, context_posterior(env, ctx)));
  }
  EXPECT_LE(summarize(gaps).value, 0.05);
}

TEST(PosteriorGap, LongerHorizonShrinksGap) {
  // A finite horizon leaves the posterior variance at s + horizon unexplored,
  // so the draws are under-dispersed by a factor that vanishes as it grows.
  const auto env = blr::BlrEnv::isotropic(1);
  const OraclePredictive oracle(env);
  std::vector<double> short_h, long_h;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto ctx = context(env, 32, 200 + i);
    const auto post = context_posterior(env, ctx);
    for (std::size_t h : {50u, 800u}) {
      const auto draws = ar_bootstrap(oracle, env, ctx, h, 500, StatKind::ols, RngStream(9, i));
      (h == 50 ? short_h : long_h).push_back(posterior_gap(draws, post));
    }
  }
  EXPECT_LT(median(long_h), median(short_h));
}

TEST(HorizonLoss, OracleNearTwiceNoise) {
  const auto env = blr::BlrEnv::isotropic(1);
  const auto e = horizon_sq_loss(OraclePredictive(env), env, 0, 2000, 200, RngStream(10, 0));
  EXPECT_NEAR(e.value, 2.0, 0.2);
}

TEST(HorizonLoss, FreeRunningMatchesPriorPredictive) {
  const auto env = blr::BlrEnv::isotropic(2, 0.5, 0.7);
  const auto e = horizon_sq_loss(OraclePredictive(env), env, 0, 50, 2000, RngStream(11, 0), HorizonMode::free_running);
  const double expected = 2.0 * (env.tau2 * env.h.trace() + env.sigma2);
  EXPECT_LE(std::abs(e.value - expected), 3.0 * e.std_error);
}

TEST(HorizonLoss, NoiselessTruth) {
  const auto env = blr::BlrEnv::isotropic(1, 1.0, 1e-18);
  const auto e = horizon_sq_loss(OraclePredictive(env), env, 50, 60, 20, RngStream(12, 0));
  EXPECT_LE(e.value, 1e-4);
}

TEST(HorizonLoss, InverseHBeatsZeroGamma) {
  const auto env = blr::BlrEnv::isotropic(1);
  const RngStream rng(13, 0);
  const LinAttnPredictive good({Mat::Identity(1, 1)}, env);
  const LinAttnPredictive zero({Mat::Zero(1, 1)}, env);
  const auto a = horizon_sq_loss(good, env, 0, 200, 200, rng);
  const auto b = horizon_sq_loss(zero, env, 0, 200, 200, rng);
  EXPECT_GT(b.value - a.value, 2.0 * std::hypot(a.std_error, b.std_error));
}

TEST(HorizonLoss, Errors) {
  const auto env = blr::BlrEnv::isotropic(1);
  EXPECT_THROW(horizon_sq_loss(OraclePredictive(env), env, 5, 5, 1, RngStream(0, 0)), ContractError);
}

TEST(GeneratedPaths, EmpiricalCdfConverges) {
  const auto env = blr::BlrEnv::isotropic(1);
  const OraclePredictive oracle(env);
  const std::size_t s = 8;
  std::vector<double> ks;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto ctx = context(env, s, 300 + i);
    const auto path = generate_path(oracle, env, ctx, s + 10000, Vec::Ones(1), RngStream(14, i));
    const Vec w_lim = context_posterior(env, path.full).mean;
    const double var = w_lim.dot(env.h * w_lim) + env.sigma2;
    ks.push_back(ks_statistic(path.y, [var](double y) { return normal_cdf(y, 0.0, var); }));
  }
  EXPECT_LE(median(ks), 0.03);
}

TEST(GeneratedPaths, PredictiveMeansAreMartingale) {
  const auto env = blr::BlrEnv::isotropic(2);
  const OraclePredictive oracle(env);
  const Vec probe = (Vec(2) << 0.7, -1.1).finished();
  const auto path = generate_path(oracle, env, context(env, 3, 15), 3 + 3000, probe, RngStream(16, 0));
  std::vector<double> inc;
  for (std::size_t k = 0; k + 1 < path.probe.size(); ++k) inc.push_back(path.probe[k + 1] - path.probe[k]);
  const auto e = summarize(inc);
  EXPECT_LE(std::abs(e.value), 3.0 * e.std_error);
}

TEST(KsStatistic, UniformGrid) {
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) v.push_back((i + 0.5) / 10.0);
  EXPECT_NEAR(ks_statistic(v, [](double x) { return x; }), 0.05, 1e-12);
}
