#pragma once

// c.i.d. regularizer: KL between the one-step predictive
//   p_t(. | pairs_{<t}, x_t)
// and the two-step predictive that marginalizes an intermediate pair,
//   p(. | pairs_{<t}, (x', zeta), x_t),  x' ~ P_X,  zeta ~ p_t(. | pairs_{<t}, x'),
// fitted as a Gaussian from M Monte Carlo draws:
//   mean = avg mu,  var = avg(mu^2 + s^2) - mean^2  (floored at 1e-8).
//
// Per sequence the Monte Carlo draws come from rng.split(sequence index) in
// the order: for each t, for each m: x' then the standard normal for zeta.

#include "exlab/ext_model.hpp"
#include "exlab/predictive.hpp"

namespace exlab::neural {

inline constexpr double kCidVarianceFloor = 1e-8;

struct CidEstimate {
  double value = 0.0;      // mean KL over (sequence, t) terms
  double std_error = 0.0;  // spread of the terms
  double mc_noise = 0.0;   // expected KL from Monte Carlo error alone when both sides agree
  std::size_t terms = 0;
  std::size_t floor_hits = 0;
};

CidEstimate cid_regularizer(const PredictiveModel& model, std::span<const blr::Trajectory> batch,
                            const blr::BlrEnv& env, std::size_t mc_samples, const RngStream& rng);

CidEstimate cid_regularizer(const ExtModel& model, std::span<const blr::Trajectory> batch, const blr::BlrEnv& env,
                            std::size_t mc_samples, const RngStream& rng);

struct CidTape {
  Var value;  // 1 x 1, mean KL over t for this sequence
  std::size_t floor_hits = 0;
};

/// Differentiable regularizer for one sequence. `one_step` are the standard
/// forward outputs for the same trajectory. Requires traj.size() >= 2.
CidTape cid_tape(Tape& tape, const ExtModel& model, const ParamVars& pv, const blr::Trajectory& traj,
                 const SequenceOutputs& one_step, const blr::BlrEnv& env, std::size_t mc_samples, RngStream rng);

}  // namespace exlab::neural
