#include "exlab/predictive.hpp"

#include <cmath>

#include "exlab/errors.hpp"

namespace exlab {

void PredictiveSession::absorb_all(const blr::Trajectory& traj) {
  traj.check();
  for (Eigen::Index t = 0; t < traj.y.size(); ++t) absorb(traj.x.row(t).transpose(), traj.y[t]);
}

Gaussian1 PredictiveModel::predict(const blr::Trajectory& ctx, const Vec& x) const {
  auto session = start();
  session->absorb_all(ctx);
  return session->predict(x);
}

std::pair<Vec, double> sample_next(PredictiveSession& session, const blr::BlrEnv& env, RngStream& rng) {
  Vec x = env.draw_covariate(rng);
  const Gaussian1 g = session.predict(x);
  const double y = g.mean + std::sqrt(g.var) * rng.normal();
  if (!std::isfinite(y)) throw DomainError("sample_next: model produced a non-finite draw");
  session.absorb(x, y);
  return {std::move(x), y};
}

namespace {

class OracleSession final : public PredictiveSession {
 public:
  explicit OracleSession(const blr::BlrEnv& env) : state_(blr::OraclePosteriorState::prior(env)) {}

  Gaussian1 predict(const Vec& x) override { return blr::oracle_predictive(state_, x); }
  void absorb(const Vec& x, double y) override { state_.absorb(x, y); }
  std::size_t size() const override { return state_.count(); }
  std::unique_ptr<PredictiveSession> clone() const override { return std::make_unique<OracleSession>(*this); }

 private:
  blr::OraclePosteriorState state_;
};

class LinAttnSession final : public PredictiveSession {
 public:
  LinAttnSession(const linattn::LinAttnModel& model, const blr::BlrEnv& env)
      : model_(&model), state_(blr::OraclePosteriorState::prior(env)), xty_(Vec::Zero(static_cast<Eigen::Index>(env.d))) {}

  Gaussian1 predict(const Vec& x) override {
    const Gaussian1 oracle = blr::oracle_predictive(state_, x);
    const double mean = state_.count() == 0
                            ? 0.0
                            : (model_->gamma * xty_).dot(x) / static_cast<double>(state_.count() + 1);
    return {mean, oracle.var};
  }
  void absorb(const Vec& x, double y) override {
    state_.absorb(x, y);
    xty_ += x * y;
  }
  std::size_t size() const override { return state_.count(); }
  std::unique_ptr<PredictiveSession> clone() const override { return std::make_unique<LinAttnSession>(*this); }

 private:
  const linattn::LinAttnModel* model_;
  blr::OraclePosteriorState state_;
  Vec xty_;
};

}  // namespace

std::unique_ptr<PredictiveSession> OraclePredictive::start() const { return std::make_unique<OracleSession>(env_); }

std::unique_ptr<PredictiveSession> LinAttnPredictive::start() const {
  return std::make_unique<LinAttnSession>(model_, env_);
}

}  // namespace exlab
