#include "exlab/cid.hpp"

#include <array>
#include <cmath>

#include "exlab/errors.hpp"
#include "exlab/ext_session.hpp"
#include "exlab/parallel.hpp"

namespace exlab::neural {

namespace {

struct Term {
  double kl = 0.0;
  double noise = 0.0;
  bool floored = false;
};

// Delta-method size of the KL that Monte Carlo error alone produces when the
// one-step and two-step laws agree: half the squared mean error over the
// variance plus a quarter of the squared relative variance error.
double noise_scale(std::span<const double> mu, std::span<const double> second, double var) {
  const auto m = static_cast<double>(mu.size());
  if (mu.size() < 2) return 0.0;
  auto sample_var = [m](std::span<const double> v) {
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= m;
    double ss = 0.0;
    for (double a : v) ss += (a - mean) * (a - mean);
    return ss / (m - 1.0);
  };
  return sample_var(mu) / (2.0 * m * var) + sample_var(second) / (4.0 * m * var * var);
}

std::vector<Term> sequence_terms(const PredictiveModel& model, const blr::Trajectory& traj, const blr::BlrEnv& env,
                                 std::size_t mc, RngStream rng) {
  std::vector<Term> terms;
  if (traj.size() < 2) return terms;
  auto session = model.start();
  std::vector<double> mu(mc);
  std::vector<double> second(mc);
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    const Vec xq = traj.x.row(static_cast<Eigen::Index>(t)).transpose();
    const Gaussian1 one = session->predict(xq);
    for (std::size_t m = 0; m < mc; ++m) {
      const Vec xp = env.draw_covariate(rng);
      const double e = rng.normal();
      auto branch = session->clone();
      const Gaussian1 p1 = branch->predict(xp);
      branch->absorb(xp, p1.mean + std::sqrt(p1.var) * e);
      const Gaussian1 p2 = branch->predict(xq);
      mu[m] = p2.mean;
      second[m] = p2.mean * p2.mean + p2.var;
    }
    double mean = 0.0;
    double sec = 0.0;
    for (std::size_t m = 0; m < mc; ++m) {
      mean += mu[m];
      sec += second[m];
    }
    mean /= static_cast<double>(mc);
    sec /= static_cast<double>(mc);
    Term term;
    double var = sec - mean * mean;
    if (!(var > kCidVarianceFloor)) {
      var = kCidVarianceFloor;
      term.floored = true;
    }
    term.kl = kl_gaussian1(one, {mean, var});
    term.noise = noise_scale(mu, second, var);
    terms.push_back(term);
    session->absorb(xq, traj.y[static_cast<Eigen::Index>(t)]);
  }
  return terms;
}

}  // namespace

CidEstimate cid_regularizer(const PredictiveModel& model, std::span<const blr::Trajectory> batch,
                            const blr::BlrEnv& env, std::size_t mc_samples, const RngStream& rng) {
  if (mc_samples == 0) throw ContractError("cid_regularizer: M must be at least 1");
  for (const auto& traj : batch) {
    traj.check();
    if (traj.dim() != model.dim() || traj.dim() != env.d) throw DimensionError("cid_regularizer: dimension mismatch");
  }
  const auto per_seq = map_indices(Exec::parallel, batch.size(), [&](std::size_t b) {
    return sequence_terms(model, batch[b], env, mc_samples, rng.split(b));
  });
  std::vector<double> kls;
  CidEstimate est;
  double noise = 0.0;
  for (const auto& terms : per_seq) {
    for (const auto& t : terms) {
      kls.push_back(t.kl);
      noise += t.noise;
      if (t.floored) ++est.floor_hits;
    }
  }
  est.terms = kls.size();
  if (kls.empty()) return est;
  const McEstimate s = summarize(kls);
  est.value = s.value;
  est.std_error = s.std_error;
  est.mc_noise = noise / static_cast<double>(kls.size());
  return est;
}

CidEstimate cid_regularizer(const ExtModel& model, std::span<const blr::Trajectory> batch, const blr::BlrEnv& env,
                            std::size_t mc_samples, const RngStream& rng) {
  const ExtPredictive pred(std::make_shared<const ExtModel>(model));
  return cid_regularizer(pred, batch, env, mc_samples, rng);
}

CidTape cid_tape(Tape& tape, const ExtModel& model, const ParamVars& pv, const blr::Trajectory& traj,
                 const SequenceOutputs& one_step, const blr::BlrEnv& env, std::size_t mc_samples, RngStream rng) {
  if (mc_samples == 0) throw ContractError("cid_tape: M must be at least 1");
  if (traj.size() < 2) throw ContractError("cid_tape: need at least two pairs");
  const std::size_t mc = mc_samples;
  const auto d = static_cast<Eigen::Index>(traj.dim());
  const auto mi = static_cast<Eigen::Index>(mc);
  const double inv_m = 1.0 / static_cast<double>(mc);

  CidTape result;
  std::vector<Var> kls;
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    Mat xp(mi, d);
    Vec e(mi);
    for (Eigen::Index m = 0; m < mi; ++m) {
      xp.row(m) = env.draw_covariate(rng).transpose();
      e[m] = rng.normal();
    }

    const std::vector<TokenDesc> prefix = standard_layout(t);
    Mat prefix_in = Mat::Zero(2 * ti, d + 1);
    for (Eigen::Index i = 0; i < ti; ++i) {
      prefix_in.block(2 * i, 0, 1, d) = traj.x.row(i);
      prefix_in.block(2 * i + 1, 0, 1, d) = traj.x.row(i);
      prefix_in(2 * i + 1, d) = traj.y[i];
    }

    // Pass 1: one-step predictive at each x'.
    std::vector<TokenDesc> tok1 = prefix;
    Mat in1 = Mat::Zero(2 * ti + mi, d + 1);
    in1.topRows(2 * ti) = prefix_in;
    std::vector<Eigen::Index> rows1;
    for (Eigen::Index m = 0; m < mi; ++m) {
      tok1.push_back({TokenKind::aux, t, static_cast<int>(m)});
      in1.block(2 * ti + m, 0, 1, d) = xp.row(m);
      rows1.push_back(2 * ti + m);
    }
    const Var out1 = tape.gather_rows(forward_tokens(tape, model, pv, tape.leaf(std::move(in1)), tok1), rows1);
    const Var mu1 = tape.slice_cols(out1, 0, 1);
    const Var sd1 = tape.exp(tape.scale(tape.slice_cols(out1, 1, 1), 0.5));
    const Var zeta = tape.add(mu1, tape.mul(sd1, tape.leaf(Mat(e))));

    // Pass 2: insert (x', zeta) and query x_t one pair later.
    std::vector<TokenDesc> tok2 = prefix;
    const Eigen::Index n2 = 2 * ti + 3 * mi;
    Mat in2 = Mat::Zero(n2, d + 1);
    in2.topRows(2 * ti) = prefix_in;
    std::vector<Eigen::Index> zeta_rows;
    std::vector<Eigen::Index> query_rows;
    for (Eigen::Index m = 0; m < mi; ++m) {
      const Eigen::Index base = 2 * ti + 3 * m;
      const int g = static_cast<int>(m);
      tok2.push_back({TokenKind::aux, t, g});
      tok2.push_back({TokenKind::target, t, g});
      tok2.push_back({TokenKind::aux, t + 1, g});
      in2.block(base, 0, 1, d) = xp.row(m);
      in2.block(base + 1, 0, 1, d) = xp.row(m);
      in2.block(base + 2, 0, 1, d) = traj.x.row(ti);
      zeta_rows.push_back(base + 1);
      query_rows.push_back(base + 2);
    }
    const Var inputs2 = tape.add(tape.leaf(std::move(in2)), tape.scatter_col(zeta, n2, d + 1, zeta_rows, d));
    const Var out2 = tape.gather_rows(forward_tokens(tape, model, pv, inputs2, tok2), query_rows);
    const Var mu2 = tape.slice_cols(out2, 0, 1);
    const Var v2 = tape.exp(tape.slice_cols(out2, 1, 1));

    const Var mean2 = tape.mean(mu2);
    const Var second = tape.scale(tape.sum(tape.add(tape.square(mu2), v2)), inv_m);
    Var var2 = tape.sub(second, tape.square(mean2));
    if (!(tape.scalar(var2) > kCidVarianceFloor)) {
      var2 = tape.leaf(Mat::Constant(1, 1, kCidVarianceFloor));
      ++result.floor_hits;
    }

    const std::array<Eigen::Index, 1> row{ti};
    const Var m1 = tape.gather_rows(one_step.mean, row);
    const Var lv1 = tape.gather_rows(one_step.logvar, row);
    const Var ratio = tape.div(tape.add(tape.exp(lv1), tape.square(tape.sub(m1, mean2))), var2);
    const Var kl = tape.scale(tape.add_scalar(tape.add(tape.sub(tape.log(var2), lv1), ratio), -1.0), 0.5);
    kls.push_back(kl);
  }
  result.value = tape.mean(tape.concat_cols(kls));
  return result;
}

}  // namespace exlab::neural
