#include "exlab/linattn.hpp"

#include <cmath>

#include "exlab/errors.hpp"

namespace exlab::linattn {

using blr::BlrEnv;

namespace {

void check_context(const Mat& ctx_x, const Vec& ctx_y, const Vec& x, std::size_t d) {
  const auto di = static_cast<Eigen::Index>(d);
  if (ctx_x.rows() != ctx_y.size()) throw DimensionError("context X rows != Y length");
  if (ctx_x.rows() > 0 && ctx_x.cols() != di) throw DimensionError("context X has wrong width");
  if (x.size() != di) throw DimensionError("query x has wrong length");
}

// Sufficient statistics of a Q-distributed prefix of n pairs.
struct PrefixStats {
  Mat xtx;
  Vec xty;
};

PrefixStats sample_prefix(const BlrEnv& env, const Vec& w, std::size_t n, RngStream& rng) {
  const auto d = static_cast<Eigen::Index>(env.d);
  const auto rows = static_cast<Eigen::Index>(n);
  Mat z(rows, d);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  const Mat x = z * env.h_chol.transpose();
  Vec y = x * w;
  const double sd = std::sqrt(env.sigma2);
  for (Eigen::Index i = 0; i < rows; ++i) y[i] += sd * rng.normal();
  return {x.transpose() * x, x.transpose() * y};
}

// One Monte Carlo draw of the per-step KL integrand.
template <class MeanFn>
double kl_integrand_sample(const BlrEnv& env, const std::optional<Vec>& fixed_w, std::size_t t, RngStream& rng,
                           MeanFn&& mean_fn) {
  const Vec w = fixed_w ? *fixed_w : Vec(std::sqrt(env.tau2) * rng.normal_vec(env.d));
  const PrefixStats stats = sample_prefix(env, w, t - 1, rng);
  const auto d = static_cast<Eigen::Index>(env.d);
  const Mat a = stats.xtx / env.sigma2 + Mat::Identity(d, d) / env.tau2;
  const Vec x = env.draw_covariate(rng);
  const Vec ainv_x = spd_solve(a, x);
  const double s2_hat = env.sigma2 + x.dot(ainv_x);
  const double mu = mean_fn(stats, ainv_x, x);
  const double r = w.dot(x) - mu;
  return 0.5 * ((env.sigma2 / s2_hat - 1.0) + std::log(s2_hat / env.sigma2) + r * r / s2_hat);
}

template <class MeanFn>
McEstimate excess_risk_impl(const BlrEnv& env, const std::optional<Vec>& w_q, std::size_t t, std::size_t mc,
                            const RngStream& rng, Exec exec, MeanFn mean_fn) {
  if (t == 0) throw DomainError("excess risk: t must be >= 1");
  if (mc == 0) throw ContractError("excess risk: mc must be >= 1");
  if (w_q && w_q->size() != static_cast<Eigen::Index>(env.d)) throw DimensionError("excess risk: w_q length");
  const auto samples = map_indices(exec, mc, [&](std::size_t i) {
    RngStream r = rng.split(i);
    return kl_integrand_sample(env, w_q, t, r, mean_fn);
  });
  return summarize(samples);
}

}  // namespace

double predict_mean(const LinAttnModel& model, const Mat& ctx_x, const Vec& ctx_y, const Vec& x, ContextNorm norm) {
  check_context(ctx_x, ctx_y, x, model.dim());
  const auto t = ctx_y.size();
  if (t == 0) return 0.0;
  const double divisor = norm == ContextNorm::pairs_plus_one ? static_cast<double>(t + 1) : static_cast<double>(t);
  const Vec s = ctx_x.transpose() * ctx_y;
  return (model.gamma * s).dot(x) / divisor;
}

double attn_forward_explicit(const Mat& v, const Mat& qk, const Mat& ctx_x, const Vec& ctx_y, const Vec& x) {
  const auto d = x.size();
  if (v.rows() != d + 1 || v.cols() != d + 1 || qk.rows() != d + 1 || qk.cols() != d + 1) {
    throw DimensionError("attention matrices must be (d+1) x (d+1)");
  }
  if (v.block(d, 0, 1, d).cwiseAbs().maxCoeff() != 0.0 || qk.block(d, 0, 1, d).cwiseAbs().maxCoeff() != 0.0) {
    throw ContractError("attention: bottom-left 1 x d blocks of V and Q'K must be zero");
  }
  if (ctx_x.rows() != ctx_y.size() || (ctx_x.rows() > 0 && ctx_x.cols() != d)) {
    throw DimensionError("attention: context shape mismatch");
  }
  const auto t = ctx_y.size();
  const auto n = t + 1;
  Mat z = Mat::Zero(d + 1, n);
  if (t > 0) {
    z.topLeftCorner(d, t) = ctx_x.transpose();
    z.bottomLeftCorner(1, t) = ctx_y.transpose();
  }
  z.block(0, t, d, 1) = x;
  // Z + (1/n) V Z Z' Q'K Z, read at the query column of the label row.
  const Mat out = z + (v * z) * (z.transpose() * qk * z) / static_cast<double>(n);
  return out(d, t);
}

McEstimate excess_risk_step(const LinAttnModel& model, const BlrEnv& env, const Vec& w_q, std::size_t t,
                            std::size_t mc, const RngStream& rng, Exec exec) {
  if (model.dim() != env.d) throw DimensionError("excess_risk_step: model/env dimension mismatch");
  return excess_risk_impl(env, w_q, t, mc, rng, exec, [&](const PrefixStats& s, const Vec&, const Vec& x) {
    return (model.gamma * s.xty).dot(x) / static_cast<double>(t);
  });
}

McEstimate excess_risk_step_prior(const LinAttnModel& model, const BlrEnv& env, std::size_t t, std::size_t mc,
                                  const RngStream& rng, Exec exec) {
  if (model.dim() != env.d) throw DimensionError("excess_risk_step: model/env dimension mismatch");
  return excess_risk_impl(env, std::nullopt, t, mc, rng, exec, [&](const PrefixStats& s, const Vec&, const Vec& x) {
    return (model.gamma * s.xty).dot(x) / static_cast<double>(t);
  });
}

McEstimate oracle_excess_risk_step(const BlrEnv& env, const std::optional<Vec>& w_q, std::size_t t, std::size_t mc,
                                   const RngStream& rng, Exec exec) {
  return excess_risk_impl(env, w_q, t, mc, rng, exec, [&](const PrefixStats& s, const Vec& ainv_x, const Vec&) {
    return ainv_x.dot(s.xty) / env.sigma2;
  });
}

double excess_risk_limit(const LinAttnModel& model, const BlrEnv& env, const Vec& w_q) {
  const auto d = static_cast<Eigen::Index>(env.d);
  if (model.gamma.rows() != d || model.gamma.cols() != d || w_q.size() != d) {
    throw DimensionError("excess_risk_limit: dimension mismatch");
  }
  const Mat m = Mat::Identity(d, d) - env.h * model.gamma.transpose();
  return w_q.dot(m * env.h * m.transpose() * w_q) / (2.0 * env.sigma2);
}

PretrainMoments pretrain_moments(const BlrEnv& env, std::size_t t) {
  if (t == 0) throw DomainError("pretrain_moments: t must be >= 1");
  const auto d = static_cast<Eigen::Index>(env.d);
  const double td = static_cast<double>(t);
  const Mat eye = Mat::Identity(d, d);
  const double trace_term = env.h.trace() + env.sigma2 / env.tau2;
  PretrainMoments m;
  m.t = t;
  m.h_tilde = env.tau2 * env.h * (trace_term / td * eye + (td + 1.0) / td * env.h);
  m.h_tilde = 0.5 * (m.h_tilde + m.h_tilde.transpose());
  const Mat inner = trace_term * eye + (td + 1.0) * env.h;
  m.gamma_tilde = td * spd_solve(inner, eye);
  m.gamma_tilde = 0.5 * (m.gamma_tilde + m.gamma_tilde.transpose());
  return m;
}

LinAttnModel optimal_gamma(const BlrEnv& env, std::size_t t_pt) {
  if (t_pt < 2) throw DomainError("optimal_gamma: T_pt must be >= 2");
  const auto d = static_cast<Eigen::Index>(env.d);
  Mat sum_h = Mat::Zero(d, d);
  Mat sum_hg = Mat::Zero(d, d);
  for (std::size_t t = 1; t < t_pt; ++t) {
    const PretrainMoments m = pretrain_moments(env, t);
    sum_h += m.h_tilde;
    sum_hg += m.h_tilde * m.gamma_tilde;
  }
  sum_h = 0.5 * (sum_h + sum_h.transpose());
  return {spd_solve(sum_h, sum_hg)};
}

std::vector<double> pretrain_risk_samples(const LinAttnModel& model, const BlrEnv& env, std::size_t t_pt,
                                          std::size_t n_traj, const RngStream& rng, ContextNorm norm, Exec exec) {
  if (t_pt == 0) throw DomainError("pretrain risk: T_pt must be >= 1");
  if (n_traj == 0) throw ContractError("pretrain risk: n_traj must be >= 1");
  if (model.dim() != env.d) throw DimensionError("pretrain risk: model/env dimension mismatch");
  return map_indices(exec, n_traj, [&](std::size_t i) {
    RngStream r = rng.split(i);
    const blr::Trajectory traj = blr::sample_trajectory(env, t_pt, r);
    Vec s = Vec::Zero(static_cast<Eigen::Index>(env.d));
    double total = 0.0;
    for (std::size_t t = 0; t < t_pt; ++t) {
      const auto row = static_cast<Eigen::Index>(t);
      const Vec x = traj.x.row(row).transpose();
      double mu = 0.0;
      if (t > 0) {
        const double divisor = norm == ContextNorm::pairs_plus_one ? static_cast<double>(t + 1) : static_cast<double>(t);
        mu = (model.gamma * s).dot(x) / divisor;
      }
      const double err = mu - traj.y[row];
      total += err * err;
      s += x * traj.y[row];
    }
    return total / static_cast<double>(t_pt);
  });
}

McEstimate mc_pretrain_risk(const LinAttnModel& model, const BlrEnv& env, std::size_t t_pt, std::size_t n_traj,
                            const RngStream& rng, ContextNorm norm, Exec exec) {
  const auto samples = pretrain_risk_samples(model, env, t_pt, n_traj, rng, norm, exec);
  return summarize(samples);
}

}  // namespace exlab::linattn
