#include "exlab/harness.hpp"

#include <cmath>

#include "exlab/cid.hpp"
#include "exlab/errors.hpp"
#include "exlab/ext_session.hpp"
#include "exlab/inference.hpp"
#include "exlab/linattn.hpp"

namespace exlab::harness {

namespace {

constexpr std::uint64_t kLengthgenStream = 0x100;
constexpr std::uint64_t kContextStream = 0x200;
constexpr std::uint64_t kBootstrapStream = 0x201;
constexpr std::uint64_t kGammaStream = 0x300;
constexpr std::uint64_t kCidStream = 0x400;
constexpr std::uint64_t kCidDataStream = 0x401;

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

template <class T>
T get_or(const io::Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::string default_id(const ModelSpec& m) {
  switch (m.kind) {
    case ModelSpec::Kind::oracle: return "oracle";
    case ModelSpec::Kind::linattn: return "linattn";
    case ModelSpec::Kind::ext:
      return m.ext.arch == neural::Arch::exchangeable ? "ext" : "gpt_" + neural::to_string(m.ext.pos_mode);
  }
  return "model";
}

Mat resolve_gamma(const GammaSource& src, const blr::BlrEnv& env) {
  const auto d = static_cast<Eigen::Index>(env.d);
  Mat gamma;
  switch (src.kind) {
    case GammaSource::Kind::inverse_h: gamma = spd_solve(env.h, Mat(Mat::Identity(d, d))); break;
    case GammaSource::Kind::optimal: gamma = linattn::optimal_gamma(env, src.t_pt).gamma; break;
    case GammaSource::Kind::zero: gamma = Mat::Zero(d, d); break;
    case GammaSource::Kind::matrix: gamma = src.matrix; break;
    case GammaSource::Kind::file: gamma = io::read_gamma(src.file); break;
  }
  if (gamma.rows() != d || gamma.cols() != d) throw DimensionError("linattn: gamma must be d x d");
  return gamma;
}

blr::BlrEnv env_with_dim(const io::Json& env, std::size_t d) {
  io::Json j = env;
  if (j.contains("d") && j.at("d").get<std::size_t>() != d) j.erase("h");
  j["d"] = d;
  return io::env_from_json(j);
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::lengthgen: return "lengthgen";
    case Experiment::posteriorgap: return "posteriorgap";
    case Experiment::gammastar: return "gammastar";
    case Experiment::bootstrap_demo: return "bootstrap-demo";
    case Experiment::cid_probe: return "cid-probe";
  }
  return "lengthgen";
}

Experiment experiment_from_string(const std::string& s) {
  if (s == "lengthgen") return Experiment::lengthgen;
  if (s == "posteriorgap") return Experiment::posteriorgap;
  if (s == "gammastar") return Experiment::gammastar;
  if (s == "bootstrap-demo") return Experiment::bootstrap_demo;
  if (s == "cid-probe") return Experiment::cid_probe;
  throw ContractError("unknown experiment: " + s);
}

void ExperimentConfig::validate() const {
  if (eval.t_grid.empty()) throw ContractError("config: eval.t_grid must not be empty");
  for (std::size_t i = 1; i < eval.t_grid.size(); ++i)
    if (eval.t_grid[i] <= eval.t_grid[i - 1]) throw ContractError("config: eval.t_grid must be strictly increasing");
  if (eval.n_traj == 0) throw ContractError("config: eval.n_traj must be >= 1");
  if (!(eval.alpha > 0.0 && eval.alpha < 1.0)) throw ContractError("config: eval.alpha must lie in (0, 1)");
  if (eval.replicates == 0 || eval.mc_samples == 0) throw ContractError("config: counts must be positive");
  if (eval.dims.empty() || eval.lengths.empty()) throw ContractError("config: eval.dims and eval.lengths must be set");
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t j = i + 1; j < models.size(); ++j)
      if (models[i].id == models[j].id) throw ContractError("config: duplicate model id " + models[i].id);
}

ExperimentConfig parse_config(const io::Json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ContractError("config: top level must be an object");
  const int version = get_or<int>(doc, "format_version", io::kFormatVersion);
  if (version != io::kFormatVersion) throw ContractError("config: unsupported format_version");
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };

  ExperimentConfig cfg;
  cfg.experiment = experiment_from_string(get_or<std::string>(doc, "experiment", "lengthgen"));
  cfg.seed = get_or<std::uint64_t>(doc, "seed", 0);
  if (doc.contains("env")) cfg.env = doc.at("env");
  const std::size_t env_d = get_or<std::size_t>(cfg.env, "d", 1);
  if (doc.contains("output_dir")) cfg.output_dir = resolve(doc.at("output_dir").get<std::string>());

  if (doc.contains("eval")) {
    const auto& e = doc.at("eval");
    cfg.eval.t_grid = get_or(e, "t_grid", cfg.eval.t_grid);
    cfg.eval.n_traj = get_or(e, "n_traj", cfg.eval.n_traj);
    cfg.eval.s = get_or(e, "s", cfg.eval.s);
    cfg.eval.horizon = get_or(e, "horizon", cfg.eval.horizon);
    cfg.eval.replicates = get_or(e, "replicates", cfg.eval.replicates);
    cfg.eval.alpha = get_or(e, "alpha", cfg.eval.alpha);
    cfg.eval.dims = get_or(e, "dims", std::vector<std::size_t>{env_d});
    cfg.eval.lengths = get_or(e, "lengths", cfg.eval.lengths);
    cfg.eval.mc_samples = get_or(e, "mc_samples", cfg.eval.mc_samples);
  } else {
    cfg.eval.dims = {env_d};
  }

  const io::Json models = doc.contains("models") ? doc.at("models") : io::Json::array({{{"kind", "oracle"}}});
  for (const auto& mj : models) {
    ModelSpec m;
    const auto kind = get_or<std::string>(mj, "kind", "oracle");
    if (kind == "oracle") {
      m.kind = ModelSpec::Kind::oracle;
    } else if (kind == "linattn") {
      m.kind = ModelSpec::Kind::linattn;
      m.gamma.t_pt = get_or<std::size_t>(mj, "t_pt", 8);
      const io::Json g = mj.contains("gamma") ? mj.at("gamma") : io::Json("inverse_h");
      if (g.is_string()) {
        const auto s = g.get<std::string>();
        if (s == "inverse_h") {
          m.gamma.kind = GammaSource::Kind::inverse_h;
        } else if (s == "optimal") {
          m.gamma.kind = GammaSource::Kind::optimal;
        } else if (s == "zero") {
          m.gamma.kind = GammaSource::Kind::zero;
        } else {
          throw ContractError("config: unknown gamma source " + s);
        }
      } else if (g.is_array()) {
        m.gamma.kind = GammaSource::Kind::matrix;
        m.gamma.matrix = io::matrix_from_json(g);
      } else if (g.is_object() && g.contains("file")) {
        m.gamma.kind = GammaSource::Kind::file;
        m.gamma.file = resolve(g.at("file").get<std::string>());
      } else {
        throw ContractError("config: bad gamma source");
      }
    } else if (kind == "ext") {
      m.kind = ModelSpec::Kind::ext;
      if (mj.contains("checkpoint")) m.checkpoint = resolve(mj.at("checkpoint").get<std::string>());
      neural::ExtConfig base = neural::ExtConfig::desk(env_d);
      m.ext = mj.contains("model") ? io::ext_config_from_json(mj.at("model"), base) : base;
      neural::TrainConfig tbase = neural::TrainConfig::desk();
      tbase.seed = cfg.seed;
      m.train = mj.contains("train") ? io::train_config_from_json(mj.at("train"), tbase) : tbase;
    } else {
      throw ContractError("config: unknown model kind " + kind);
    }
    m.id = get_or<std::string>(mj, "id", default_id(m));
    cfg.models.push_back(std::move(m));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  return parse_config(io::read_json(path), path.has_parent_path() ? path.parent_path() : fs::path{});
}

io::Json config_to_json(const ExperimentConfig& cfg) {
  io::Json models = io::Json::array();
  for (const auto& m : cfg.models) {
    io::Json mj = {{"id", m.id}};
    switch (m.kind) {
      case ModelSpec::Kind::oracle: mj["kind"] = "oracle"; break;
      case ModelSpec::Kind::linattn:
        mj["kind"] = "linattn";
        mj["t_pt"] = m.gamma.t_pt;
        switch (m.gamma.kind) {
          case GammaSource::Kind::inverse_h: mj["gamma"] = "inverse_h"; break;
          case GammaSource::Kind::optimal: mj["gamma"] = "optimal"; break;
          case GammaSource::Kind::zero: mj["gamma"] = "zero"; break;
          case GammaSource::Kind::matrix: mj["gamma"] = io::matrix_to_json(m.gamma.matrix); break;
          case GammaSource::Kind::file: mj["gamma"] = {{"file", m.gamma.file.string()}}; break;
        }
        break;
      case ModelSpec::Kind::ext:
        mj["kind"] = "ext";
        mj["model"] = io::to_json(m.ext);
        mj["train"] = io::to_json(m.train);
        if (m.checkpoint) mj["checkpoint"] = m.checkpoint->string();
        break;
    }
    models.push_back(std::move(mj));
  }
  return {{"format_version", io::kFormatVersion},
          {"experiment", to_string(cfg.experiment)},
          {"seed", cfg.seed},
          {"env", cfg.env},
          {"models", models},
          {"eval",
           {{"t_grid", cfg.eval.t_grid},
            {"n_traj", cfg.eval.n_traj},
            {"s", cfg.eval.s},
            {"horizon", cfg.eval.horizon},
            {"replicates", cfg.eval.replicates},
            {"alpha", cfg.eval.alpha},
            {"dims", cfg.eval.dims},
            {"lengths", cfg.eval.lengths},
            {"mc_samples", cfg.eval.mc_samples}}},
          {"output_dir", cfg.output_dir.string()}};
}

MaterializedModel materialize(const ModelSpec& spec, const blr::BlrEnv& env, const Log& log) {
  MaterializedModel out;
  out.id = spec.id;
  switch (spec.kind) {
    case ModelSpec::Kind::oracle: out.predictive = std::make_shared<OraclePredictive>(env); break;
    case ModelSpec::Kind::linattn: {
      out.predictive = std::make_shared<LinAttnPredictive>(linattn::LinAttnModel{resolve_gamma(spec.gamma, env)},
                                                           env, spec.id);
      break;
    }
    case ModelSpec::Kind::ext: {
      neural::ExtModel model;
      if (spec.checkpoint) {
        neural::Checkpoint ck = neural::load_checkpoint(*spec.checkpoint);
        model = std::move(ck.model);
        if (ck.meta.train) out.trained_length = ck.meta.train->seq_len;
      } else {
        neural::ExtConfig ec = spec.ext;
        ec.d = env.d;
        say(log, "training " + spec.id + " (d=" + std::to_string(env.d) + ", T_pt=" +
                     std::to_string(spec.train.seq_len) + ", steps=" + std::to_string(spec.train.steps) + ")");
        neural::TrainResult tr = neural::train(neural::ExtModel::init(ec, spec.train.seed), env, spec.train);
        model = std::move(tr.model);
        out.curve = std::move(tr.curve);
        out.trained_length = spec.train.seq_len;
      }
      if (model.config.d != env.d) throw DimensionError("ext model dimension does not match env");
      auto shared = std::make_shared<const neural::ExtModel>(model);
      out.ext = std::move(model);
      out.predictive = std::make_shared<neural::ExtPredictive>(shared, spec.id);
      break;
    }
  }
  return out;
}

report::EvalReport run_lengthgen(const ExperimentConfig& cfg, const Log& log) {
  const blr::BlrEnv env = io::env_from_json(cfg.env);
  const std::size_t t_max = cfg.eval.t_grid.back();
  const RngStream data(cfg.seed, kLengthgenStream);
  report::EvalReport rep;
  for (const auto& spec : cfg.models) {
    const MaterializedModel m = materialize(spec, env, log);
    say(log, "lengthgen: " + m.id);
    // kl[i][k]: trajectory i at grid point k
    const auto kl = map_indices(Exec::parallel, cfg.eval.n_traj, [&](std::size_t i) {
      RngStream r = data.split(i);
      const blr::Trajectory traj = blr::sample_trajectory(env, t_max + 1, r);
      auto oracle = blr::OraclePosteriorState::prior(env);
      auto session = m.predictive->start();
      std::vector<double> row;
      std::size_t k = 0;
      for (std::size_t t = 0; t <= t_max && k < cfg.eval.t_grid.size(); ++t) {
        const Vec x = traj.x.row(static_cast<Eigen::Index>(t)).transpose();
        if (t == cfg.eval.t_grid[k]) {
          row.push_back(kl_gaussian1(blr::oracle_predictive(oracle, x), session->predict(x)));
          ++k;
        }
        const double y = traj.y[static_cast<Eigen::Index>(t)];
        oracle.absorb(x, y);
        session->absorb(x, y);
      }
      return row;
    });
    for (std::size_t k = 0; k < cfg.eval.t_grid.size(); ++k) {
      std::vector<double> col;
      for (const auto& row : kl) col.push_back(row[k]);
      const McEstimate est = summarize(col);
      rep.add({"lengthgen", m.id, env.d, cfg.eval.t_grid[k], "kl_predictive", est.value, est.std_error, est.n});
    }
  }
  return rep;
}

report::EvalReport run_posteriorgap(const ExperimentConfig& cfg, const Log& log) {
  report::EvalReport rep;
  for (const std::size_t d : cfg.eval.dims) {
    const blr::BlrEnv env = env_with_dim(cfg.env, d);
    const RngStream contexts(cfg.seed, kContextStream);
    const RngStream boot(cfg.seed, kBootstrapStream);
    for (const std::size_t length : cfg.eval.lengths) {
      for (const auto& base_spec : cfg.models) {
        ModelSpec spec = base_spec;
        if (spec.kind == ModelSpec::Kind::ext && !spec.checkpoint) spec.train.seq_len = length;
        if (spec.kind == ModelSpec::Kind::ext && spec.checkpoint && length != cfg.eval.lengths.front()) continue;
        const MaterializedModel m = materialize(spec, env, log);
        const std::size_t label = spec.kind == ModelSpec::Kind::ext && spec.checkpoint ? m.trained_length : length;
        say(log, "posteriorgap: " + m.id + " d=" + std::to_string(d) + " length=" + std::to_string(label));
        std::vector<double> gaps;
        std::vector<double> covered;
        for (std::size_t i = 0; i < cfg.eval.n_traj; ++i) {
          RngStream r = contexts.split(i);
          const blr::Trajectory ctx = blr::sample_trajectory(env, cfg.eval.s, r);
          const auto draws = inference::ar_bootstrap(*m.predictive, env, ctx, cfg.eval.horizon,
                                                     cfg.eval.replicates, inference::StatKind::ols, boot.split(i));
          gaps.push_back(inference::posterior_gap(draws, inference::context_posterior(env, ctx)));
          if (draws.size() >= 20) {
            const auto ci = inference::credible_interval(draws, cfg.eval.alpha);
            bool all = true;
            for (std::size_t j = 0; j < d; ++j) all = all && ci[j].contains((*ctx.w)[static_cast<Eigen::Index>(j)]);
            covered.push_back(all ? 1.0 : 0.0);
          }
        }
        const McEstimate g = summarize(gaps);
        rep.add({"posteriorgap", m.id, d, label, "kl_posterior", g.value, g.std_error, g.n});
        if (!covered.empty()) {
          const McEstimate c = summarize(covered);
          rep.add({"posteriorgap", m.id, d, label, "coverage", c.value, c.std_error, c.n});
        }
      }
    }
  }
  return rep;
}

report::EvalReport run_gammastar(const ExperimentConfig& cfg, const fs::path& out_dir, const Log& log) {
  const blr::BlrEnv env = io::env_from_json(cfg.env);
  const RngStream rng(cfg.seed, kGammaStream);
  report::EvalReport rep;
  for (const std::size_t t_pt : cfg.eval.t_grid) {
    if (t_pt < 2) throw ContractError("gammastar: T_pt must be >= 2");
    const linattn::LinAttnModel star = linattn::optimal_gamma(env, t_pt);
    if (!out_dir.empty()) {
      io::write_gamma(out_dir / ("gamma_star_T" + std::to_string(t_pt) + ".json"), star.gamma,
                      {{"source", "optimal_gamma"}, {"t_pt", t_pt}, {"env", io::to_json(env)}});
    }
    say(log, "gammastar: T_pt=" + std::to_string(t_pt));
    const McEstimate risk = linattn::mc_pretrain_risk(star, env, t_pt, cfg.eval.n_traj, rng.split(t_pt));
    rep.add({"gammastar", "gamma_star", env.d, t_pt, "sq_loss", risk.value, risk.std_error, risk.n});
    for (const auto& spec : cfg.models) {
      if (spec.kind != ModelSpec::Kind::linattn) continue;
      const linattn::LinAttnModel model{resolve_gamma(spec.gamma, env)};
      const McEstimate r = linattn::mc_pretrain_risk(model, env, t_pt, cfg.eval.n_traj, rng.split(t_pt));
      rep.add({"gammastar", spec.id, env.d, t_pt, "sq_loss", r.value, r.std_error, r.n});
    }
  }
  return rep;
}

report::EvalReport run_bootstrap_demo(const ExperimentConfig& cfg, const fs::path& out_dir, const Log& log) {
  const blr::BlrEnv env = io::env_from_json(cfg.env);
  RngStream ctx_rng = RngStream(cfg.seed, kContextStream).split(0);
  const blr::Trajectory ctx = blr::sample_trajectory(env, cfg.eval.s, ctx_rng);
  const GaussianN oracle = inference::context_posterior(env, ctx);
  report::EvalReport rep;
  for (const auto& spec : cfg.models) {
    const MaterializedModel m = materialize(spec, env, log);
    say(log, "bootstrap: " + m.id);
    const auto draws = inference::ar_bootstrap(*m.predictive, env, ctx, cfg.eval.horizon, cfg.eval.replicates,
                                               inference::StatKind::ols, RngStream(cfg.seed, kBootstrapStream));
    if (!out_dir.empty()) io::write_bootstrap(out_dir / ("bootstrap_" + m.id + ".csv"), draws, ctx);
    rep.add({"bootstrap-demo", m.id, env.d, cfg.eval.horizon, "kl_posterior", inference::posterior_gap(draws, oracle),
             0.0, draws.size()});
  }
  return rep;
}

report::EvalReport run_cid_probe(const ExperimentConfig& cfg, const Log& log) {
  const blr::BlrEnv env = io::env_from_json(cfg.env);
  report::EvalReport rep;
  for (const auto& spec : cfg.models) {
    const MaterializedModel m = materialize(spec, env, log);
    for (const std::size_t t : cfg.eval.t_grid) {
      if (t < 2) continue;
      say(log, "cid-probe: " + m.id + " T=" + std::to_string(t));
      const RngStream data = RngStream(cfg.seed, kCidDataStream).split(t);
      std::vector<blr::Trajectory> batch;
      for (std::size_t i = 0; i < cfg.eval.n_traj; ++i) {
        RngStream r = data.split(i);
        batch.push_back(blr::sample_trajectory(env, t, r));
      }
      const auto est =
          neural::cid_regularizer(*m.predictive, batch, env, cfg.eval.mc_samples, RngStream(cfg.seed, kCidStream));
      rep.add({"cid-probe", m.id, env.d, t, "kl_predictive", est.value, est.std_error, est.terms});
    }
  }
  return rep;
}

report::EvalReport run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir, const Log& log) {
  switch (cfg.experiment) {
    case Experiment::lengthgen: return run_lengthgen(cfg, log);
    case Experiment::posteriorgap: return run_posteriorgap(cfg, log);
    case Experiment::gammastar: return run_gammastar(cfg, out_dir, log);
    case Experiment::bootstrap_demo: return run_bootstrap_demo(cfg, out_dir, log);
    case Experiment::cid_probe: return run_cid_probe(cfg, log);
  }
  throw ContractError("unknown experiment");
}

void write_report(const report::EvalReport& report, const fs::path& out_dir, const std::string& stem, bool svg) {
  report::emit_report(report, report::Format::csv, out_dir / (stem + ".csv"));
  report::emit_report(report, report::Format::json, out_dir / (stem + ".json"));
  if (svg) report::emit_report(report, report::Format::svg, out_dir / (stem + ".svg"));
}

}  // namespace exlab::harness
