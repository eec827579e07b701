#pragma once

#include <functional>
#include <optional>

#include "exlab/blr_env.hpp"
#include "exlab/ext_model.hpp"
#include "exlab/parallel.hpp"

namespace exlab::neural {

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t steps = 3000;
  double lr = 1e-4;  // peak; cosine-annealed to 0 over `steps`
  std::size_t seq_len = 8;
  double lambda_cid = 0.0;
  std::size_t mc_samples = 50;
  bool augment = false;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;

  static TrainConfig desk();
  static TrainConfig paper();
  void validate() const;
};

struct LossRecord {
  std::size_t step = 0;
  double nll = 0.0;
  double cid = 0.0;
  double total = 0.0;
};

struct TrainResult {
  ExtModel model;
  std::vector<LossRecord> curve;
};

/// Learning rate at `step` of `steps` under cosine annealing.
double cosine_lr(double peak, std::size_t step, std::size_t steps);

/// The training batch for `step`: fresh env trajectories, independently
/// permuted when cfg.augment is set.
std::vector<blr::Trajectory> training_batch(const blr::BlrEnv& env, const TrainConfig& cfg, std::size_t step);

/// Adam on nll + lambda_cid * cid. Throws TrainingDiverged if the loss stays
/// above 10x its initial magnitude for 100 consecutive steps.
TrainResult train(ExtModel model, const blr::BlrEnv& env, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_step = {});

struct BatchGradient {
  double nll = 0.0;
  double cid = 0.0;
  std::size_t floor_hits = 0;
  std::vector<Mat> grads;  // aligned with model.params
};

/// Mean loss over the batch and its gradient. Sequence i draws its CID Monte
/// Carlo samples from cid_rng.split(i).
BatchGradient batch_gradient(const ExtModel& model, std::span<const blr::Trajectory> batch, const blr::BlrEnv& env,
                             double lambda_cid, std::size_t mc_samples, const RngStream& cid_rng, Exec exec);

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  // Restrict sampling to parameters whose name starts with this prefix.
  std::string name_prefix;
};

/// Max relative error |analytic - fd| / max(|analytic|, |fd|, 1e-6) over
/// randomly sampled parameter entries of the batch NLL.
double grad_check(const ExtModel& model, std::span<const blr::Trajectory> batch, const GradCheckOptions& opts = {});

}  // namespace exlab::neural
