#include "exlab/blr_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "exlab/errors.hpp"

namespace exlab::blr {

BlrEnv BlrEnv::make(std::size_t d, double tau2, double sigma2, Mat h) {
  if (d == 0) throw DomainError("env: d must be >= 1");
  if (!(tau2 > 0.0) || !std::isfinite(tau2)) throw DomainError("env: tau2 must be > 0");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw DomainError("env: sigma2 must be > 0");
  if (h.rows() != static_cast<Eigen::Index>(d) || h.cols() != static_cast<Eigen::Index>(d)) {
    throw DimensionError("env: H must be d x d");
  }
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff())) {
    throw FactorizationError("env: H must be symmetric");
  }
  BlrEnv env;
  env.d = d;
  env.tau2 = tau2;
  env.sigma2 = sigma2;
  env.h_chol = cholesky_lower(h);
  env.h = std::move(h);
  return env;
}

BlrEnv BlrEnv::isotropic(std::size_t d, double tau2, double sigma2) {
  return make(d, tau2, sigma2, Mat::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
}

Vec BlrEnv::draw_covariate(RngStream& rng) const { return h_chol * rng.normal_vec(d); }

Trajectory Trajectory::prefix(std::size_t t) const {
  if (t > size()) throw DimensionError("prefix longer than trajectory");
  const auto n = static_cast<Eigen::Index>(t);
  return Trajectory{x.topRows(n), y.head(n), w};
}

void Trajectory::check() const {
  if (x.rows() != y.size()) throw DimensionError("trajectory: X rows != Y length");
}

Trajectory sample_trajectory_with(const BlrEnv& env, const Vec& w, std::size_t length, RngStream& rng) {
  if (w.size() != static_cast<Eigen::Index>(env.d)) throw DimensionError("trajectory: w has wrong length");
  const auto n = static_cast<Eigen::Index>(length);
  const auto d = static_cast<Eigen::Index>(env.d);
  Trajectory traj{Mat(n, d), Vec(n), w};
  const double noise_sd = std::sqrt(env.sigma2);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Vec x = env.draw_covariate(rng);
    traj.x.row(t) = x.transpose();
    traj.y[t] = w.dot(x) + noise_sd * rng.normal();
  }
  return traj;
}

Trajectory sample_trajectory(const BlrEnv& env, std::size_t length, RngStream& rng) {
  if (length == 0) throw DomainError("trajectory length must be >= 1");
  const Vec w = std::sqrt(env.tau2) * rng.normal_vec(env.d);
  return sample_trajectory_with(env, w, length, rng);
}

OraclePosteriorState OraclePosteriorState::prior(const BlrEnv& env) {
  const auto d = static_cast<Eigen::Index>(env.d);
  return OraclePosteriorState(Mat::Identity(d, d) / env.tau2, Vec::Zero(d), env.sigma2);
}

void OraclePosteriorState::absorb(const Vec& x, double y) {
  if (x.size() != b_.size()) throw DimensionError("posterior_update: x has wrong length");
  a_.noalias() += (x * x.transpose()) / sigma2_;
  b_ += x * (y / sigma2_);
  ++t_;
}

OraclePosteriorState OraclePosteriorState::updated(const Vec& x, double y) const {
  OraclePosteriorState next = *this;
  next.absorb(x, y);
  return next;
}

void OraclePosteriorState::absorb_all(const Trajectory& traj) {
  traj.check();
  for (Eigen::Index t = 0; t < traj.y.size(); ++t) absorb(traj.x.row(t).transpose(), traj.y[t]);
}

OraclePosteriorState posterior_update(const OraclePosteriorState& state, const Vec& x, double y) {
  return state.updated(x, y);
}

GaussianN oracle_posterior(const OraclePosteriorState& state) {
  const auto d = static_cast<Eigen::Index>(state.dim());
  Mat cov = spd_solve(state.precision(), Mat(Mat::Identity(d, d)));
  cov = 0.5 * (cov + cov.transpose());
  Vec mean = spd_solve(state.precision(), state.b());
  return {std::move(mean), std::move(cov)};
}

Gaussian1 oracle_predictive(const OraclePosteriorState& state, const Vec& x) {
  if (x.size() != static_cast<Eigen::Index>(state.dim())) throw DimensionError("oracle_predictive: x has wrong length");
  const Vec ainv_x = spd_solve(state.precision(), x);
  return {ainv_x.dot(state.b()), x.dot(ainv_x) + state.sigma2()};
}

double oracle_forward_sample(const OraclePosteriorState& state, const Vec& x, RngStream& rng) {
  const Gaussian1 g = oracle_predictive(state, x);
  return g.mean + std::sqrt(g.var) * rng.normal();
}

double gaussian_log_density(const Gaussian1& g, double y) {
  const double r = y - g.mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * g.var) + r * r / g.var);
}

std::vector<double> oracle_running_log_score(const BlrEnv& env, std::span<const std::size_t> horizons,
                                             RngStream& rng) {
  if (horizons.empty()) return {};
  const std::size_t t_max = *std::max_element(horizons.begin(), horizons.end());
  const Trajectory traj = sample_trajectory(env, t_max, rng);
  auto state = OraclePosteriorState::prior(env);
  std::vector<double> running(t_max + 1, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < t_max; ++t) {
    const auto i = static_cast<Eigen::Index>(t);
    const Vec x = traj.x.row(i).transpose();
    total += gaussian_log_density(oracle_predictive(state, x), traj.y[i]);
    state.absorb(x, traj.y[i]);
    running[t + 1] = total / static_cast<double>(t + 1);
  }
  std::vector<double> out;
  out.reserve(horizons.size());
  for (std::size_t h : horizons) out.push_back(running.at(h));
  return out;
}

}  // namespace exlab::blr
