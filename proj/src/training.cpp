#include "exlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "exlab/cid.hpp"
#include "exlab/errors.hpp"

namespace exlab::neural {

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.lr = 1e-3;
  return c;
}

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.steps = 30000;
  return c;
}

void TrainConfig::validate() const {
  if (batch == 0 || seq_len == 0 || mc_samples == 0) throw ContractError("train config: counts must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ContractError("train config: lr must be positive");
  if (!(lambda_cid >= 0.0) || !std::isfinite(lambda_cid)) throw ContractError("train config: lambda_cid must be >= 0");
  if (lambda_cid > 0.0 && seq_len < 2) throw ContractError("train config: the cid term needs seq_len >= 2");
}

double cosine_lr(double peak, std::size_t step, std::size_t steps) {
  if (steps == 0) return peak;
  const double frac = static_cast<double>(step) / static_cast<double>(steps);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<blr::Trajectory> training_batch(const blr::BlrEnv& env, const TrainConfig& cfg, std::size_t step) {
  const RngStream step_rng = RngStream(cfg.seed, 1).split(step);
  std::vector<blr::Trajectory> batch;
  batch.reserve(cfg.batch);
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    RngStream rng = step_rng.split(i);
    blr::Trajectory traj = blr::sample_trajectory(env, cfg.seq_len, rng);
    if (cfg.augment) {
      std::vector<Eigen::Index> perm(traj.size());
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      blr::Trajectory shuffled{Mat(traj.x.rows(), traj.x.cols()), Vec(traj.y.size()), traj.w};
      for (std::size_t k = 0; k < perm.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        shuffled.x.row(r) = traj.x.row(perm[k]);
        shuffled.y[r] = traj.y[perm[k]];
      }
      traj = std::move(shuffled);
    }
    batch.push_back(std::move(traj));
  }
  return batch;
}

namespace {

struct SeqGrad {
  double nll = 0.0;
  double cid = 0.0;
  std::size_t floor_hits = 0;
  std::vector<Mat> grads;
};

}  // namespace

BatchGradient batch_gradient(const ExtModel& model, std::span<const blr::Trajectory> batch, const blr::BlrEnv& env,
                             double lambda_cid, std::size_t mc_samples, const RngStream& cid_rng, Exec exec) {
  if (batch.empty()) throw ContractError("batch_gradient: empty batch");
  const auto per_seq = map_indices(exec, batch.size(), [&](std::size_t i) {
    Tape tape;
    const ParamVars pv = bind_params(tape, model);
    const SequenceOutputs out = forward_sequence(tape, model, pv, batch[i]);
    const Var nll = nll_tape(tape, out, batch[i].y);
    SeqGrad g;
    g.nll = tape.scalar(nll);
    Var total = nll;
    if (lambda_cid > 0.0) {
      const CidTape cid = cid_tape(tape, model, pv, batch[i], out, env, mc_samples, cid_rng.split(i));
      g.cid = tape.scalar(cid.value);
      g.floor_hits = cid.floor_hits;
      total = tape.add(nll, tape.scale(cid.value, lambda_cid));
    }
    tape.backward(total);
    g.grads.reserve(pv.vars.size());
    for (const Var v : pv.vars) g.grads.push_back(tape.grad(v));
    return g;
  });

  BatchGradient out;
  out.grads.reserve(model.params.size());
  for (const auto& v : model.params.values) out.grads.push_back(Mat::Zero(v.rows(), v.cols()));
  for (const auto& g : per_seq) {
    out.nll += g.nll;
    out.cid += g.cid;
    out.floor_hits += g.floor_hits;
    for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += g.grads[k];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.nll *= inv;
  out.cid *= inv;
  for (auto& g : out.grads) g *= inv;
  return out;
}

TrainResult train(ExtModel model, const blr::BlrEnv& env, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_step) {
  cfg.validate();
  model.config.validate();
  if (model.config.d != env.d) throw DimensionError("train: model and env dimensions differ");

  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;
  constexpr std::size_t guard_window = 100;

  std::vector<Mat> m1;
  std::vector<Mat> m2;
  for (const auto& v : model.params.values) {
    m1.push_back(Mat::Zero(v.rows(), v.cols()));
    m2.push_back(Mat::Zero(v.rows(), v.cols()));
  }

  TrainResult result{std::move(model), {}};
  ExtModel& m = result.model;
  result.curve.reserve(cfg.steps);
  const RngStream cid_root(cfg.seed, 2);
  double initial = 0.0;
  std::size_t above = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const auto batch = training_batch(env, cfg, step);
    const BatchGradient g = batch_gradient(m, batch, env, cfg.lambda_cid, cfg.mc_samples, cid_root.split(step), cfg.exec);
    const LossRecord rec{step, g.nll, g.cid, g.nll + cfg.lambda_cid * g.cid};
    result.curve.push_back(rec);
    if (on_step) on_step(rec);

    if (!std::isfinite(rec.total)) throw TrainingDiverged("train: non-finite loss at step " + std::to_string(step));
    if (step == 0) initial = std::abs(rec.total);
    above = rec.total > 10.0 * initial ? above + 1 : 0;
    if (above >= guard_window) {
      throw TrainingDiverged("train: loss above 10x its initial value for 100 consecutive steps (step " +
                             std::to_string(step) + ")");
    }

    const double lr = cosine_lr(cfg.lr, step, cfg.steps);
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t k = 0; k < m.params.size(); ++k) {
      m1[k] = beta1 * m1[k] + (1.0 - beta1) * g.grads[k];
      m2[k] = beta2 * m2[k] + (1.0 - beta2) * g.grads[k].cwiseAbs2();
      m.params.values[k].array() -=
          lr * (m1[k].array() / c1) / ((m2[k].array() / c2).sqrt() + adam_eps);
    }
  }
  return result;
}

namespace {

double batch_nll(const ExtModel& model, std::span<const blr::Trajectory> batch) {
  return nll_loss(forward(model, batch), batch);
}

}  // namespace

double grad_check(const ExtModel& model, std::span<const blr::Trajectory> batch, const GradCheckOptions& opts) {
  if (!(opts.eps >= 1e-6 && opts.eps <= 1e-4)) throw ContractError("grad_check: eps must lie in [1e-6, 1e-4]");
  if (batch.empty()) throw ContractError("grad_check: empty batch");
  const BatchGradient g = batch_gradient(model, batch, blr::BlrEnv::isotropic(model.config.d), 0.0, 1,
                                         RngStream(opts.seed, 0), Exec::parallel);

  // Flat (tensor, row, col) index over the eligible parameters.
  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < model.params.size(); ++k)
    if (model.params.names[k].starts_with(opts.name_prefix)) eligible.push_back(k);
  if (eligible.empty()) throw ContractError("grad_check: no parameter matches the prefix");
  std::vector<std::size_t> offsets{0};
  for (std::size_t k : eligible) offsets.push_back(offsets.back() + static_cast<std::size_t>(model.params.values[k].size()));
  const std::size_t total = offsets.back();

  RngStream rng(opts.seed, 3);
  std::vector<std::size_t> picks;
  if (total <= opts.samples) {
    picks.resize(total);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
  } else {
    for (std::size_t s = 0; s < opts.samples; ++s) picks.push_back(rng.next_u64() % total);
  }

  const auto errs = map_indices(Exec::parallel, picks.size(), [&](std::size_t s) {
    const std::size_t flat = picks[s];
    const auto pos = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const std::size_t k = eligible[pos];
    const auto local = static_cast<Eigen::Index>(flat - offsets[pos]);
    ExtModel probe = model;
    double& entry = probe.params.values[k].data()[local];
    const double base = entry;
    entry = base + opts.eps;
    const double up = batch_nll(probe, batch);
    entry = base - opts.eps;
    const double down = batch_nll(probe, batch);
    const double fd = (up - down) / (2.0 * opts.eps);
    const double an = g.grads[k].data()[local];
    return std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
  });
  return *std::max_element(errs.begin(), errs.end());
}

}  // namespace exlab::neural
