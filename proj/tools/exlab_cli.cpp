// exlab command line. Every subcommand takes --config, --seed, --out, --svg.
// Output directory precedence: --out, config "output_dir", $EXLAB_OUT_DIR, ./exlab_out.
// Failures print one JSON error record on stderr and exit nonzero.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "exlab/checkpoint.hpp"
#include "exlab/errors.hpp"
#include "exlab/harness.hpp"
#include "exlab/io.hpp"
#include "exlab/training.hpp"

namespace fs = std::filesystem;
using namespace exlab;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool svg = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  sub->add_option("--seed", c.seed, "override the config seed");
  sub->add_option("--out", c.out, "output directory");
  sub->add_flag("--svg", c.svg, "also write an SVG plot");
}

harness::ExperimentConfig load(const Common& c, harness::Experiment fallback) {
  io::Json doc = io::Json::object();
  fs::path base;
  if (!c.config.empty()) {
    doc = io::read_json(c.config);
    base = fs::path(c.config).parent_path();
  }
  if (!doc.contains("experiment")) doc["experiment"] = harness::to_string(fallback);
  if (c.seed) doc["seed"] = *c.seed;
  return harness::parse_config(doc, base);
}

fs::path out_dir(const Common& c, const harness::ExperimentConfig& cfg) {
  if (!c.out.empty()) return c.out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("EXLAB_OUT_DIR"); env && *env) return env;
  return "exlab_out";
}

void log_line(const std::string& msg) { std::cerr << "[exlab] " << msg << "\n"; }

const harness::ModelSpec& first_ext(const harness::ExperimentConfig& cfg) {
  for (const auto& m : cfg.models)
    if (m.kind == harness::ModelSpec::Kind::ext) return m;
  throw ContractError("config: no ext model in models[]");
}

harness::ExperimentConfig with_default_ext(harness::ExperimentConfig cfg) {
  for (const auto& m : cfg.models)
    if (m.kind == harness::ModelSpec::Kind::ext) return cfg;
  harness::ModelSpec m;
  m.kind = harness::ModelSpec::Kind::ext;
  m.id = "ext";
  m.ext = neural::ExtConfig::desk(io::env_from_json(cfg.env).d);
  m.train = neural::TrainConfig::desk();
  m.train.seed = cfg.seed;
  cfg.models.push_back(m);
  return cfg;
}

int cmd_gen(const Common& c, std::optional<std::size_t> n, std::optional<std::size_t> length) {
  const auto cfg = load(c, harness::Experiment::lengthgen);
  const fs::path dir = out_dir(c, cfg);
  const blr::BlrEnv env = io::env_from_json(cfg.env);
  const std::size_t count = n.value_or(cfg.eval.n_traj);
  const std::size_t len = length.value_or(cfg.eval.horizon);
  constexpr std::uint64_t stream = 0x500;
  const RngStream root(cfg.seed, stream);
  for (std::size_t i = 0; i < count; ++i) {
    RngStream r = root.split(i);
    const auto traj = blr::sample_trajectory(env, len, r);
    char name[32];
    std::snprintf(name, sizeof name, "traj_%04zu.csv", i);
    io::write_trajectory(dir / name, traj, env, cfg.seed, stream);
  }
  std::cout << io::Json{{"written", count}, {"length", len}, {"dir", dir.string()}}.dump() << "\n";
  return 0;
}

int cmd_experiment(const Common& c, harness::Experiment which, const std::string& stem) {
  const auto cfg = load(c, which);
  if (cfg.experiment != which) throw ContractError("config experiment is " + harness::to_string(cfg.experiment));
  const fs::path dir = out_dir(c, cfg);
  const auto rep = harness::run_experiment(cfg, dir, log_line);
  harness::write_report(rep, dir, stem, c.svg);
  io::write_json(dir / (stem + "_config.json"), harness::config_to_json(cfg));
  std::cout << report::to_csv(rep);
  return 0;
}

int cmd_run(const Common& c) {
  const auto cfg = load(c, harness::Experiment::lengthgen);
  const fs::path dir = out_dir(c, cfg);
  const auto rep = harness::run_experiment(cfg, dir, log_line);
  const std::string stem = harness::to_string(cfg.experiment);
  harness::write_report(rep, dir, stem, c.svg);
  io::write_json(dir / (stem + "_config.json"), harness::config_to_json(cfg));
  std::cout << report::to_csv(rep);
  return 0;
}

int cmd_train(const Common& c) {
  const auto cfg = with_default_ext(load(c, harness::Experiment::lengthgen));
  const auto& spec = first_ext(cfg);
  const fs::path dir = out_dir(c, cfg);
  const blr::BlrEnv env = io::env_from_json(cfg.env);
  neural::ExtConfig ec = spec.ext;
  ec.d = env.d;
  neural::TrainConfig tc = spec.train;
  if (c.seed) tc.seed = *c.seed;
  const std::size_t every = std::max<std::size_t>(1, tc.steps / 20);
  auto result = neural::train(neural::ExtModel::init(ec, tc.seed), env, tc, [&](const neural::LossRecord& r) {
    if (r.step % every == 0) log_line("step " + std::to_string(r.step) + " nll " + io::format_double(r.nll));
  });
  neural::save_checkpoint(dir / (spec.id + ".json"), result.model, {tc.seed, tc.steps, tc});
  io::write_loss_csv(dir / (spec.id + "_loss.csv"), result.curve);
  if (c.svg) {
    report::EvalReport rep;
    for (const auto& r : result.curve)
      rep.add({"train", spec.id, env.d, r.step + 1, "nll", r.nll, 0.0, tc.batch});
    report::emit_report(rep, report::Format::svg, dir / (spec.id + "_loss.svg"));
  }
  const double final_nll = result.curve.empty() ? 0.0 : result.curve.back().nll;
  std::cout << io::Json{{"checkpoint", (dir / (spec.id + ".json")).string()}, {"steps", tc.steps},
                        {"final_nll", final_nll}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_grad_check(const Common& c, double eps, std::size_t samples) {
  const auto cfg = with_default_ext(load(c, harness::Experiment::lengthgen));
  const auto& spec = first_ext(cfg);
  const fs::path dir = out_dir(c, cfg);
  const blr::BlrEnv env = io::env_from_json(cfg.env);
  neural::ExtConfig ec = spec.ext;
  ec.d = env.d;
  const auto model = neural::ExtModel::init(ec, cfg.seed, neural::HeadInit::random);
  neural::TrainConfig tc = spec.train;
  tc.seed = cfg.seed;
  tc.batch = 4;
  const auto batch = neural::training_batch(env, tc, 0);
  const double err = neural::grad_check(model, batch, {eps, samples, cfg.seed, ""});
  const io::Json doc = {{"max_rel_error", err}, {"eps", eps}, {"samples", samples}, {"seed", cfg.seed}};
  io::write_json(dir / "grad_check.json", doc);
  std::cout << doc.dump() << "\n";
  return 0;
}

int error_exit(const std::string& command, const char* kind, const std::string& message, int code) {
  std::cerr << io::Json{{"error", {{"command", command}, {"kind", kind}, {"message", message}, {"exit_code", code}}}}
                   .dump()
            << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exlab: exchangeable sequence models and Bayesian linear regression"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "sample trajectories from the environment");
  add_common(gen, common);
  std::optional<std::size_t> gen_n;
  std::optional<std::size_t> gen_len;
  gen->add_option("--n", gen_n, "number of trajectories (default eval.n_traj)");
  gen->add_option("--length", gen_len, "pairs per trajectory (default eval.horizon)");

  auto* gamma = app.add_subcommand("gamma-star", "optimal linear-attention Gamma for each T_pt in eval.t_grid");
  add_common(gamma, common);
  auto* train = app.add_subcommand("train", "train the first ext model of the config");
  add_common(train, common);
  auto* lengthgen = app.add_subcommand("lengthgen", "predictive KL against the oracle over eval.t_grid");
  add_common(lengthgen, common);
  auto* posteriorgap = app.add_subcommand("posteriorgap", "bootstrap posterior gap per (dim, length) cell");
  add_common(posteriorgap, common);
  auto* bootstrap = app.add_subcommand("bootstrap", "autoregressive bootstrap draws on one context");
  add_common(bootstrap, common);
  auto* grad = app.add_subcommand("grad-check", "autodiff vs central finite differences");
  add_common(grad, common);
  double eps = 1e-5;
  std::size_t samples = 200;
  grad->add_option("--eps", eps, "finite-difference step in [1e-6, 1e-4]");
  grad->add_option("--samples", samples, "parameters sampled");
  auto* run = app.add_subcommand("run", "run whatever experiment the config names");
  add_common(run, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return error_exit("parse", "usage", e.what(), 64);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "gen") return cmd_gen(common, gen_n, gen_len);
    if (name == "gamma-star") return cmd_experiment(common, harness::Experiment::gammastar, "gammastar");
    if (name == "train") return cmd_train(common);
    if (name == "lengthgen") return cmd_experiment(common, harness::Experiment::lengthgen, "lengthgen");
    if (name == "posteriorgap") return cmd_experiment(common, harness::Experiment::posteriorgap, "posteriorgap");
    if (name == "bootstrap") return cmd_experiment(common, harness::Experiment::bootstrap_demo, "bootstrap");
    if (name == "grad-check") return cmd_grad_check(common, eps, samples);
    if (name == "run") return cmd_run(common);
  } catch (const IoError& e) {
    return error_exit(name, "io", e.what(), 3);
  } catch (const ContractError& e) {
    return error_exit(name, "config", e.what(), 2);
  } catch (const ContextLengthError& e) {
    return error_exit(name, "context_length", e.what(), 2);
  } catch (const TrainingDiverged& e) {
    return error_exit(name, "diverged", e.what(), 4);
  } catch (const FactorizationError& e) {
    return error_exit(name, "numeric", e.what(), 4);
  } catch (const DomainError& e) {
    return error_exit(name, "numeric", e.what(), 4);
  } catch (const DimensionError& e) {
    return error_exit(name, "dimension", e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return error_exit(name, "config", e.what(), 2);
  } catch (const std::exception& e) {
    return error_exit(name, "internal", e.what(), 1);
  }
  return error_exit(name, "usage", "unknown subcommand", 64);
}
