#pragma once

// Posterior inference by forward generation.
//
// ar_bootstrap extends a fixed context autoregressively with draws from the
// model's own predictive and computes a statistic over context + continuation;
// the spread of the statistic across replicates approximates the posterior.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "exlab/parallel.hpp"
#include "exlab/predictive.hpp"

namespace exlab::inference {

enum class StatKind { empirical_mean, ols };

std::string to_string(StatKind k);
StatKind stat_from_string(const std::string& s);

inline constexpr double kOlsRidge = 1e-10;

/// empirical_mean: 1-vector mean of y. ols: (X'X + 1e-10 I)^{-1} X'y.
Vec compute_statistic(StatKind kind, const blr::Trajectory& traj);

struct BootstrapConfig {
  std::size_t s = 0;
  std::size_t horizon = 0;
  std::size_t replicates = 0;
  StatKind stat = StatKind::ols;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

struct BootstrapDraws {
  std::vector<Vec> values;
  BootstrapConfig config;

  std::size_t size() const { return values.size(); }
  std::size_t dim() const { return values.empty() ? 0 : static_cast<std::size_t>(values.front().size()); }
};

/// Replicate b extends `context` to `horizon` pairs with rng.split(b).
BootstrapDraws ar_bootstrap(const PredictiveModel& model, const blr::BlrEnv& env, const blr::Trajectory& context,
                            std::size_t horizon, std::size_t replicates, StatKind stat, const RngStream& rng,
                            Exec exec = Exec::parallel);

/// Type-7 sample quantile (linear interpolation between order statistics).
double quantile(std::vector<double> values, double p);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return lo <= v && v <= hi; }
};

/// Central alpha-level interval per coordinate. Needs at least 20 draws.
std::vector<Interval> credible_interval(const BootstrapDraws& draws, double alpha);

/// KL(fit_gaussian(draws) || oracle).
double posterior_gap(const BootstrapDraws& draws, const GaussianN& oracle);

/// Oracle posterior over w after absorbing every pair of `context`.
GaussianN context_posterior(const blr::BlrEnv& env, const blr::Trajectory& context);

enum class HorizonMode {
  one_step,      // Y_hat_t drawn from the predictive given the observed Y_{<t}
  free_running,  // Y_hat_t drawn given the model's own earlier draws
};

std::string to_string(HorizonMode m);
HorizonMode horizon_mode_from_string(const std::string& s);

/// Average over n_traj env trajectories of (1/T) sum_{t>s} (Y_hat_t - Y_t)^2.
/// Trajectory i uses rng.split(i).
McEstimate horizon_sq_loss(const PredictiveModel& model, const blr::BlrEnv& env, std::size_t s, std::size_t horizon,
                           std::size_t n_traj, const RngStream& rng, HorizonMode mode = HorizonMode::one_step,
                           Exec exec = Exec::parallel);

double normal_cdf(double x, double mean, double var);

/// sup_x |F_n(x) - F(x)| for the empirical CDF of `samples`.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

struct GeneratedPath {
  std::vector<double> y;       // generated outcomes, length horizon - context.size()
  std::vector<double> probe;   // predictive mean at the probe before each draw and after the last
  blr::Trajectory full;        // context followed by the generated pairs
};

/// One forward-generated continuation, recording the predictive mean at
/// `probe_x` along the way.
GeneratedPath generate_path(const PredictiveModel& model, const blr::BlrEnv& env, const blr::Trajectory& context,
                            std::size_t horizon, const Vec& probe_x, RngStream rng);

}  // namespace exlab::inference
