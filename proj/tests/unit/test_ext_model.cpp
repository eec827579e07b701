#include <algorithm>
#include <numeric>

#include <gtest/gtest.h>

#include "exlab/errors.hpp"
#include "exlab/ext_model.hpp"
#include "exlab/ext_session.hpp"

using namespace exlab;
using namespace exlab::neural;

namespace {

blr::Trajectory sample(std::size_t d, std::size_t t, std::uint64_t seed) {
  RngStream rng(seed, 0);
  return blr::sample_trajectory(blr::BlrEnv::isotropic(d), t, rng);
}

blr::Trajectory permuted_prefix(const blr::Trajectory& traj, std::size_t upto, RngStream& rng) {
  std::vector<Eigen::Index> order(upto);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  blr::Trajectory out = traj;
  for (std::size_t i = 0; i < upto; ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = traj.x.row(order[i]);
    out.y(static_cast<Eigen::Index>(i)) = traj.y(order[i]);
  }
  return out;
}

std::vector<Gaussian1> predict_one(const ExtModel& m, const blr::Trajectory& traj) {
  const blr::Trajectory batch[] = {traj};
  return forward(m, batch).front();
}

ExtConfig gpt_learned(std::size_t d) {
  ExtConfig c = ExtConfig::desk(d);
  c.arch = Arch::gpt_style;
  c.pos_mode = PosMode::learned;
  return c;
}

}  // namespace

TEST(Mask, SinglePair) {
  const BoolMat m = build_mask(Arch::exchangeable, 1);
  EXPECT_TRUE(m(0, 0));
  EXPECT_FALSE(m(0, 1));
  EXPECT_FALSE(m(1, 0));
  EXPECT_TRUE(m(1, 1));
}

TEST(Mask, TwoPairs) {
  // Layout a1 g1 a2 g2.
  const BoolMat m = build_mask(Arch::exchangeable, 2);
  BoolMat expected(4, 4);
  expected << true, false, false, false,  //
      false, true, false, false,          //
      false, true, true, false,           //
      false, true, false, true;
  EXPECT_EQ(m, expected);
}

TEST(Mask, RowSumsCountEarlierTargets) {
  const std::size_t t = 9;
  const BoolMat m = build_mask(Arch::exchangeable, t);
  for (std::size_t i = 0; i < t; ++i) {
    EXPECT_EQ(m.row(static_cast<Eigen::Index>(2 * i)).count(), static_cast<Eigen::Index>(i + 1));
    EXPECT_EQ(m.row(static_cast<Eigen::Index>(2 * i + 1)).count(), static_cast<Eigen::Index>(i + 1));
  }
  const BoolMat g = build_mask(Arch::gpt_style, t);
  for (Eigen::Index r = 0; r < g.rows(); ++r) EXPECT_EQ(g.row(r).count(), r + 1);
}

TEST(ExtConfig, Presets) {
  const auto desk = ExtConfig::desk(1);
  EXPECT_EQ(desk.n_embed_layers, 2u);
  EXPECT_EQ(desk.d_model, 32u);
  EXPECT_EQ(desk.d_ff, 64u);
  EXPECT_EQ(desk.n_heads, 2u);
  const auto paper = ExtConfig::paper(1);
  EXPECT_EQ(paper.n_embed_layers, 4u);
  EXPECT_EQ(paper.d_ff, 128u);
  EXPECT_EQ(paper.n_heads, 4u);
  EXPECT_EQ(paper.n_layers, 12u);
  ExtConfig bad = desk;
  bad.n_heads = 3;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(ExtModel, NoPositionalParametersWithoutPositions) {
  const auto m = ExtModel::init(ExtConfig::desk(2), 1);
  for (const auto& n : m.params.names) EXPECT_EQ(n.find("pos"), std::string::npos) << n;
  const auto g = ExtModel::init(gpt_learned(2), 1);
  EXPECT_NO_THROW(g.params.index_of("pos.table"));
  EXPECT_EQ(ExtModel::init(ExtConfig::desk(2), 1).params.scalar_count(), m.params.scalar_count());
}

TEST(ExtModel, ZeroHeadPredictsStandardNormal) {
  const auto m = ExtModel::init(ExtConfig::desk(2), 3);
  for (const auto& g : predict_one(m, sample(2, 6, 1))) {
    EXPECT_EQ(g.mean, 0.0);
    EXPECT_EQ(g.var, 1.0);
  }
}

TEST(ExtModel, Causality) {
  for (Arch arch : {Arch::exchangeable, Arch::gpt_style}) {
    ExtConfig c = ExtConfig::desk(2);
    c.arch = arch;
    const auto m = ExtModel::init(c, 4, HeadInit::random);
    const auto traj = sample(2, 8, 2);
    const auto base = predict_one(m, traj);
    for (std::size_t i = 0; i < 8; ++i) {
      blr::Trajectory probe = traj;
      for (std::size_t k = i; k < 8; ++k) probe.y(static_cast<Eigen::Index>(k)) += 3.0;
      for (std::size_t k = i + 1; k < 8; ++k) probe.x.row(static_cast<Eigen::Index>(k)).array() -= 1.5;
      const auto out = predict_one(m, probe);
      EXPECT_NEAR(out[i].mean, base[i].mean, 1e-8);
      EXPECT_NEAR(out[i].var, base[i].var, 1e-8);
    }
  }
}

TEST(ExtModel, SingleLayerPermutationInvariance) {
  ExtConfig c = ExtConfig::desk(2);
  c.n_layers = 1;
  const auto m = ExtModel::init(c, 5, HeadInit::random);
  const auto traj = sample(2, 10, 3);
  const auto base = predict_one(m, traj);
  RngStream rng(6, 0);
  for (std::size_t i = 2; i < 10; ++i) {
    const auto out = predict_one(m, permuted_prefix(traj, i, rng));
    EXPECT_NEAR(out[i].mean, base[i].mean, 1e-6);
    EXPECT_NEAR(out[i].var, base[i].var, 1e-6);
  }
}

// With two or more blocks, target token j carries a summary of the targets
// before it, so the readout sees ordered prefixes and invariance is lost.
TEST(ExtModel, DeeperStackSeesContextOrder) {
  const auto m = ExtModel::init(ExtConfig::desk(2), 5, HeadInit::random);
  const auto traj = sample(2, 10, 3);
  const auto base = predict_one(m, traj);
  RngStream rng(6, 0);
  double worst = 0.0;
  for (std::size_t i = 3; i < 10; ++i) {
    const auto out = predict_one(m, permuted_prefix(traj, i, rng));
    worst = std::max(worst, std::abs(out[i].mean - base[i].mean));
  }
  EXPECT_GT(worst, 1e-6);
}

TEST(ExtModel, LearnedPositionsBreakInvariance) {
  const auto m = ExtModel::init(gpt_learned(2), 5, HeadInit::random);
  const auto traj = sample(2, 10, 3);
  const auto base = predict_one(m, traj);
  RngStream rng(6, 0);
  double worst = 0.0;
  for (std::size_t i = 2; i < 10; ++i) {
    const auto out = predict_one(m, permuted_prefix(traj, i, rng));
    worst = std::max(worst, std::abs(out[i].mean - base[i].mean));
  }
  EXPECT_GT(worst, 1e-6);
}

TEST(ExtModel, LearnedTableLimit) {
  ExtConfig c = gpt_learned(1);
  c.max_tokens = 8;
  const auto m = ExtModel::init(c, 1);
  EXPECT_NO_THROW(predict_one(m, sample(1, 4, 1)));
  EXPECT_THROW(predict_one(m, sample(1, 5, 1)), ContextLengthError);
}

TEST(ExtModel, LogVarianceClamped) {
  auto m = ExtModel::init(ExtConfig::desk(1), 7);
  m.params.at("head.b")(0, 1) = 50.0;
  for (const auto& g : predict_one(m, sample(1, 3, 1))) EXPECT_DOUBLE_EQ(g.var, std::exp(10.0));
}

TEST(NllLoss, Examples) {
  blr::Trajectory traj = sample(1, 3, 1);
  const blr::Trajectory batch[] = {traj};
  std::vector<std::vector<Gaussian1>> exact{{}};
  std::vector<std::vector<Gaussian1>> zero{{}};
  for (Eigen::Index t = 0; t < 3; ++t) {
    exact[0].push_back({traj.y(t), 1.0});
    zero[0].push_back({traj.y(t) - 1.0, 1.0});
  }
  EXPECT_NEAR(nll_loss(exact, batch), 0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(nll_loss(zero, batch), 0.5 * std::log(2 * std::numbers::pi) + 0.5, 1e-15);
}

TEST(ExtSession, MatchesTapeForward) {
  for (Arch arch : {Arch::exchangeable, Arch::gpt_style}) {
    ExtConfig c = ExtConfig::desk(2);
    c.arch = arch;
    c.pos_mode = arch == Arch::gpt_style ? PosMode::sinusoidal : PosMode::none;
    auto model = std::make_shared<const ExtModel>(ExtModel::init(c, 8, HeadInit::random));
    const auto traj = sample(2, 12, 4);
    const auto ref = predict_one(*model, traj);
    ExtPredictive pred(model);
    auto session = pred.start();
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const Vec x = traj.x.row(static_cast<Eigen::Index>(i)).transpose();
      const auto g = session->predict(x);
      EXPECT_NEAR(g.mean, ref[i].mean, 1e-10);
      EXPECT_NEAR(g.var, ref[i].var, 1e-10);
      session->absorb(x, traj.y(static_cast<Eigen::Index>(i)));
    }
    EXPECT_EQ(session->size(), traj.size());
  }
}

TEST(ExtSession, CloneIsIndependent) {
  auto model = std::make_shared<const ExtModel>(ExtModel::init(ExtConfig::desk(1), 9, HeadInit::random));
  ExtPredictive pred(model);
  auto a = pred.start();
  a->absorb(Vec::Constant(1, 0.3), 1.0);
  auto b = a->clone();
  const Vec x = Vec::Constant(1, -0.4);
  const double before = a->predict(x).mean;
  b->absorb(Vec::Constant(1, 2.0), -3.0);
  EXPECT_EQ(a->predict(x).mean, before);
  EXPECT_EQ(a->size(), 1u);
  EXPECT_EQ(b->size(), 2u);
}
