#include "exlab/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "exlab/errors.hpp"

namespace exlab::inference {

std::string to_string(StatKind k) { return k == StatKind::ols ? "ols" : "empirical_mean"; }

StatKind stat_from_string(const std::string& s) {
  if (s == "ols") return StatKind::ols;
  if (s == "empirical_mean") return StatKind::empirical_mean;
  throw ContractError("unknown statistic: " + s);
}

std::string to_string(HorizonMode m) { return m == HorizonMode::one_step ? "one_step" : "free_running"; }

HorizonMode horizon_mode_from_string(const std::string& s) {
  if (s == "one_step") return HorizonMode::one_step;
  if (s == "free_running") return HorizonMode::free_running;
  throw ContractError("unknown horizon mode: " + s);
}

Vec compute_statistic(StatKind kind, const blr::Trajectory& traj) {
  traj.check();
  if (kind == StatKind::empirical_mean) {
    if (traj.size() == 0) throw ContractError("empirical_mean: empty trajectory");
    return Vec::Constant(1, traj.y.mean());
  }
  const std::size_t d = traj.dim();
  if (traj.size() < d + 1) throw ContractError("ols: need at least d+1 pairs");
  Mat gram = traj.x.transpose() * traj.x;
  gram.diagonal().array() += kOlsRidge;
  const Vec rhs = traj.x.transpose() * traj.y;
  return gram.ldlt().solve(rhs);
}

namespace {

blr::Trajectory with_capacity(const blr::Trajectory& context, std::size_t horizon) {
  blr::Trajectory full{Mat(static_cast<Eigen::Index>(horizon), context.x.cols()),
                       Vec(static_cast<Eigen::Index>(horizon)), context.w};
  const auto s = static_cast<Eigen::Index>(context.size());
  full.x.topRows(s) = context.x;
  full.y.head(s) = context.y;
  return full;
}

}  // namespace

BootstrapDraws ar_bootstrap(const PredictiveModel& model, const blr::BlrEnv& env, const blr::Trajectory& context,
                            std::size_t horizon, std::size_t replicates, StatKind stat, const RngStream& rng,
                            Exec exec) {
  context.check();
  const std::size_t s = context.size();
  if (!(horizon > s)) throw ContractError("ar_bootstrap: need T > s");
  if (replicates == 0) throw ContractError("ar_bootstrap: need B >= 1");
  if (s > 0 && context.dim() != env.d) throw DimensionError("ar_bootstrap: context dimension mismatch");
  if (model.dim() != env.d) throw DimensionError("ar_bootstrap: model dimension mismatch");
  if (stat == StatKind::ols && horizon < env.d + 1) throw ContractError("ols: need at least d+1 pairs");

  auto base = model.start();
  if (s > 0) base->absorb_all(context);
  blr::Trajectory ctx = context;
  if (s == 0) ctx.x.resize(0, static_cast<Eigen::Index>(env.d));

  BootstrapDraws out;
  out.config = {s, horizon, replicates, stat, rng.seed(), rng.stream()};
  out.values = map_indices(exec, replicates, [&](std::size_t b) {
    RngStream r = rng.split(b);
    auto session = base->clone();
    blr::Trajectory full = with_capacity(ctx, horizon);
    for (std::size_t t = s; t < horizon; ++t) {
      const auto [x, y] = sample_next(*session, env, r);
      full.x.row(static_cast<Eigen::Index>(t)) = x.transpose();
      full.y[static_cast<Eigen::Index>(t)] = y;
    }
    return compute_statistic(stat, full);
  });
  return out;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ContractError("quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("quantile: p must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<Interval> credible_interval(const BootstrapDraws& draws, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("credible_interval: alpha must lie in (0, 1)");
  if (draws.size() < 20) throw ContractError("credible_interval: need at least 20 draws");
  const double tail = (1.0 - alpha) / 2.0;
  std::vector<Interval> out;
  for (std::size_t j = 0; j < draws.dim(); ++j) {
    std::vector<double> col;
    col.reserve(draws.size());
    for (const auto& v : draws.values) col.push_back(v[static_cast<Eigen::Index>(j)]);
    out.push_back({quantile(col, tail), quantile(col, 1.0 - tail)});
  }
  return out;
}

double posterior_gap(const BootstrapDraws& draws, const GaussianN& oracle) {
  if (draws.config.stat != StatKind::ols) throw ContractError("posterior_gap: draws must be OLS coefficients");
  if (draws.dim() != oracle.dim()) throw DimensionError("posterior_gap: dimension mismatch");
  return kl_gaussian_n(fit_gaussian(draws.values), oracle);
}

GaussianN context_posterior(const blr::BlrEnv& env, const blr::Trajectory& context) {
  auto state = blr::OraclePosteriorState::prior(env);
  if (context.size() > 0) state.absorb_all(context);
  return blr::oracle_posterior(state);
}

McEstimate horizon_sq_loss(const PredictiveModel& model, const blr::BlrEnv& env, std::size_t s, std::size_t horizon,
                           std::size_t n_traj, const RngStream& rng, HorizonMode mode, Exec exec) {
  if (!(horizon > s)) throw ContractError("horizon_sq_loss: need T > s");
  if (n_traj == 0) throw ContractError("horizon_sq_loss: need n_traj >= 1");
  if (model.dim() != env.d) throw DimensionError("horizon_sq_loss: model dimension mismatch");
  const auto losses = map_indices(exec, n_traj, [&](std::size_t i) {
    RngStream r = rng.split(i);
    const blr::Trajectory traj = blr::sample_trajectory(env, horizon, r);
    auto session = model.start();
    double total = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      const auto ti = static_cast<Eigen::Index>(t);
      const Vec x = traj.x.row(ti).transpose();
      const double y = traj.y[ti];
      if (t < s) {
        session->absorb(x, y);
        continue;
      }
      const Gaussian1 g = session->predict(x);
      const double y_hat = g.mean + std::sqrt(g.var) * r.normal();
      if (!std::isfinite(y_hat)) throw DomainError("horizon_sq_loss: non-finite model draw");
      total += (y_hat - y) * (y_hat - y);
      session->absorb(x, mode == HorizonMode::one_step ? y : y_hat);
    }
    return total / static_cast<double>(horizon);
  });
  return summarize(losses);
}

double normal_cdf(double x, double mean, double var) {
  return 0.5 * std::erfc(-(x - mean) / std::sqrt(2.0 * var));
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ContractError("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

GeneratedPath generate_path(const PredictiveModel& model, const blr::BlrEnv& env, const blr::Trajectory& context,
                            std::size_t horizon, const Vec& probe_x, RngStream rng) {
  const std::size_t s = context.size();
  if (!(horizon > s)) throw ContractError("generate_path: need T > s");
  auto session = model.start();
  if (s > 0) session->absorb_all(context);
  blr::Trajectory ctx = context;
  if (s == 0) ctx.x.resize(0, static_cast<Eigen::Index>(env.d));
  GeneratedPath path{{}, {}, with_capacity(ctx, horizon)};
  path.y.reserve(horizon - s);
  path.probe.reserve(horizon - s + 1);
  for (std::size_t t = s; t < horizon; ++t) {
    path.probe.push_back(session->predict(probe_x).mean);
    const auto [x, y] = sample_next(*session, env, rng);
    path.full.x.row(static_cast<Eigen::Index>(t)) = x.transpose();
    path.full.y[static_cast<Eigen::Index>(t)] = y;
    path.y.push_back(y);
  }
  path.probe.push_back(session->predict(probe_x).mean);
  return path;
}

}  // namespace exlab::inference
