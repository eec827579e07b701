#pragma once

// Uniform one-step predictive interface shared by the oracle, the linear
// attention model and the transformer. A session holds an incrementally grown
// context; predict() never changes it, absorb() appends exactly one pair.

#include <memory>
#include <string>

#include "exlab/blr_env.hpp"
#include "exlab/linattn.hpp"

namespace exlab {

class PredictiveSession {
 public:
  virtual ~PredictiveSession() = default;

  virtual Gaussian1 predict(const Vec& x) = 0;
  virtual void absorb(const Vec& x, double y) = 0;
  virtual std::size_t size() const = 0;
  virtual std::unique_ptr<PredictiveSession> clone() const = 0;

  void absorb_all(const blr::Trajectory& traj);
};

class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;

  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
  /// Session with an empty context.
  virtual std::unique_ptr<PredictiveSession> start() const = 0;

  /// Predictive at x after conditioning on every pair of ctx.
  Gaussian1 predict(const blr::Trajectory& ctx, const Vec& x) const;
};

/// Draws x from the env covariate law, y from the session's predictive at x,
/// absorbs the pair and returns it.
std::pair<Vec, double> sample_next(PredictiveSession& session, const blr::BlrEnv& env, RngStream& rng);

class OraclePredictive final : public PredictiveModel {
 public:
  explicit OraclePredictive(blr::BlrEnv env) : env_(std::move(env)) {}

  std::size_t dim() const override { return env_.d; }
  std::string id() const override { return "oracle"; }
  std::unique_ptr<PredictiveSession> start() const override;

 private:
  blr::BlrEnv env_;
};

/// Attention mean with oracle variances (known-variance assumption).
class LinAttnPredictive final : public PredictiveModel {
 public:
  LinAttnPredictive(linattn::LinAttnModel model, blr::BlrEnv env, std::string id = "linattn")
      : model_(std::move(model)), env_(std::move(env)), id_(std::move(id)) {}

  std::size_t dim() const override { return env_.d; }
  std::string id() const override { return id_; }
  std::unique_ptr<PredictiveSession> start() const override;

 private:
  linattn::LinAttnModel model_;
  blr::BlrEnv env_;
  std::string id_;
};

}  // namespace exlab
