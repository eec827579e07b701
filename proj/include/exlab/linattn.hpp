#pragma once

// One-layer linear attention predictor for Bayesian linear regression.
//
// With the value / query-key blocks constrained as
//   V = [[*, *], [0, v]],  Q'K = [[W, *], [0, *]]
// the attention output at the query column is
//   mu(x) = (X'Y)' Gamma' x / (t + 1),   Gamma' = W v'
// for t context pairs. Predictive variances are taken from the oracle.

#include <cstddef>
#include <optional>

#include "exlab/blr_env.hpp"
#include "exlab/parallel.hpp"

namespace exlab::linattn {

struct LinAttnModel {
  Mat gamma;  // d x d

  std::size_t dim() const { return static_cast<std::size_t>(gamma.rows()); }
};

/// Divisor applied to the context sum X'Y.
///   pairs_plus_one: t + 1 for t context pairs (attention with the query column).
///   pairs:          t (context average; the pre-training closed forms use this).
enum class ContextNorm { pairs_plus_one, pairs };

double predict_mean(const LinAttnModel& model, const Mat& ctx_x, const Vec& ctx_y, const Vec& x,
                    ContextNorm norm = ContextNorm::pairs_plus_one);

/// Explicit residual attention on Z = [[x_1 .. x_t x], [y_1 .. y_t 0]], read at
/// entry (d+1, t+1) with normalization 1/(t+1). V and QK are (d+1) x (d+1) and
/// must have zero bottom-left 1 x d blocks (ContractError otherwise).
double attn_forward_explicit(const Mat& v, const Mat& qk, const Mat& ctx_x, const Vec& ctx_y, const Vec& x);

/// Per-step excess risk E_Q KL(N(w_q'X, s2) || N(mu_t(X), s2_hat_t)) at step t
/// (t - 1 context pairs from Q). Each Monte Carlo sample draws a fresh prefix
/// and a fresh query.
McEstimate excess_risk_step(const LinAttnModel& model, const blr::BlrEnv& env, const Vec& w_q, std::size_t t,
                            std::size_t mc, const RngStream& rng, Exec exec = Exec::parallel);

/// Same integrand with the oracle posterior mean in place of the attention mean.
/// When w_q is empty, each sample draws w_q from the prior (well-specified data).
McEstimate oracle_excess_risk_step(const blr::BlrEnv& env, const std::optional<Vec>& w_q, std::size_t t,
                                   std::size_t mc, const RngStream& rng, Exec exec = Exec::parallel);

/// excess_risk_step with w_q drawn from the prior for each sample.
McEstimate excess_risk_step_prior(const LinAttnModel& model, const blr::BlrEnv& env, std::size_t t, std::size_t mc,
                                  const RngStream& rng, Exec exec = Exec::parallel);

/// Large-t limit: w_q'(I - H Gamma')H(I - H Gamma')'w_q / (2 sigma2).
double excess_risk_limit(const LinAttnModel& model, const blr::BlrEnv& env, const Vec& w_q);

struct PretrainMoments {
  std::size_t t = 1;
  Mat h_tilde;      // E[(X'Y/t)(X'Y/t)']
  Mat gamma_tilde;  // per-step least-squares Gamma
};

PretrainMoments pretrain_moments(const blr::BlrEnv& env, std::size_t t);

/// Minimizer of the pre-training risk over steps t = 1 .. t_pt - 1.
LinAttnModel optimal_gamma(const blr::BlrEnv& env, std::size_t t_pt);

/// Per-trajectory pre-training losses (1/T_pt) sum_{t<T_pt} (mu_t(x_{t+1}) - y_{t+1})^2.
/// Trajectory i uses rng.split(i), so two models evaluated with the same rng
/// see the same data (common random numbers).
std::vector<double> pretrain_risk_samples(const LinAttnModel& model, const blr::BlrEnv& env, std::size_t t_pt,
                                          std::size_t n_traj, const RngStream& rng,
                                          ContextNorm norm = ContextNorm::pairs, Exec exec = Exec::parallel);

McEstimate mc_pretrain_risk(const LinAttnModel& model, const blr::BlrEnv& env, std::size_t t_pt, std::size_t n_traj,
                            const RngStream& rng, ContextNorm norm = ContextNorm::pairs,
                            Exec exec = Exec::parallel);

}  // namespace exlab::linattn
