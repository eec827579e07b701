#pragma once

// Bayesian linear regression environment and its conjugate oracle.
//
//   w ~ N(0, tau2 I),  x_t ~iid N(0, H),  y_t = w'x_t + eps_t,  eps_t ~ N(0, sigma2)
//
// The oracle keeps the posterior precision A_t = X'X / sigma2 + I / tau2 and
// b_t = X'y / sigma2; the predictive for step t is read from the state after
// t-1 observations.

#include <cstddef>
#include <optional>

#include "exlab/mathkit.hpp"

namespace exlab::blr {

struct BlrEnv {
  std::size_t d = 1;
  double tau2 = 1.0;
  double sigma2 = 1.0;
  Mat h;        // E[x x'], symmetric positive definite
  Mat h_chol;   // lower Cholesky factor of h

  /// Validates and precomputes the covariate factor. Throws DomainError /
  /// FactorizationError / DimensionError on bad parameters.
  static BlrEnv make(std::size_t d, double tau2, double sigma2, Mat h);
  static BlrEnv isotropic(std::size_t d, double tau2 = 1.0, double sigma2 = 1.0);

  Vec draw_covariate(RngStream& rng) const;
};

struct Trajectory {
  Mat x;                  // T x d
  Vec y;                  // T
  std::optional<Vec> w;   // latent coefficient when generated

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
  Trajectory prefix(std::size_t t) const;
  void check() const;
};

Trajectory sample_trajectory(const BlrEnv& env, std::size_t length, RngStream& rng);

/// Same trajectory law as sample_trajectory but with a fixed coefficient.
Trajectory sample_trajectory_with(const BlrEnv& env, const Vec& w, std::size_t length, RngStream& rng);

class OraclePosteriorState {
 public:
  static OraclePosteriorState prior(const BlrEnv& env);

  const Mat& precision() const { return a_; }
  const Vec& b() const { return b_; }
  std::size_t count() const { return t_; }
  double sigma2() const { return sigma2_; }
  std::size_t dim() const { return static_cast<std::size_t>(b_.size()); }

  /// Returns the state after absorbing (x, y); *this is left unchanged.
  OraclePosteriorState updated(const Vec& x, double y) const;
  /// In-place variant of updated().
  void absorb(const Vec& x, double y);
  void absorb_all(const Trajectory& traj);

 private:
  OraclePosteriorState(Mat a, Vec b, double sigma2) : a_(std::move(a)), b_(std::move(b)), sigma2_(sigma2) {}

  Mat a_;
  Vec b_;
  std::size_t t_ = 0;
  double sigma2_;
};

OraclePosteriorState posterior_update(const OraclePosteriorState& state, const Vec& x, double y);
GaussianN oracle_posterior(const OraclePosteriorState& state);
Gaussian1 oracle_predictive(const OraclePosteriorState& state, const Vec& x);
double oracle_forward_sample(const OraclePosteriorState& state, const Vec& x, RngStream& rng);

/// Running average (1/T) sum_t log p_{t-1}(y_t) of the oracle on its own data,
/// evaluated at each requested horizon along one trajectory of length max(horizons).
std::vector<double> oracle_running_log_score(const BlrEnv& env, std::span<const std::size_t> horizons,
                                             RngStream& rng);

double gaussian_log_density(const Gaussian1& g, double y);

}  // namespace exlab::blr
