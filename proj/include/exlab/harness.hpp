#pragma once

// Experiment driver. One JSON file fully determines a run:
//
// {
//   "format_version": 1,
//   "experiment": "lengthgen" | "posteriorgap" | "gammastar" | "bootstrap-demo" | "cid-probe",
//   "seed": 0,
//   "env": {"d": 1, "tau2": 1, "sigma2": 1, "h": [[1]]},
//   "models": [
//     {"kind": "oracle"},
//     {"kind": "linattn", "id": "...", "gamma": "inverse_h" | "optimal" | "zero" | [[...]] | {"file": "g.json"},
//      "t_pt": 8},
//     {"kind": "ext", "id": "...", "checkpoint": "model.json"},
//     {"kind": "ext", "id": "...", "model": {ExtConfig fields or "preset"}, "train": {TrainConfig fields}}
//   ],
//   "eval": {"t_grid": [...], "n_traj": 100, "s": 8, "horizon": 200, "replicates": 500, "alpha": 0.9,
//            "dims": [1], "lengths": [32], "mc_samples": 50},
//   "output_dir": "out"
// }

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "exlab/checkpoint.hpp"
#include "exlab/io.hpp"
#include "exlab/predictive.hpp"
#include "exlab/report.hpp"

namespace exlab::harness {

namespace fs = std::filesystem;

enum class Experiment { lengthgen, posteriorgap, gammastar, bootstrap_demo, cid_probe };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

struct GammaSource {
  enum class Kind { inverse_h, optimal, zero, matrix, file } kind = Kind::inverse_h;
  std::size_t t_pt = 8;  // for optimal
  Mat matrix;
  fs::path file;
};

struct ModelSpec {
  enum class Kind { oracle, linattn, ext } kind = Kind::oracle;
  std::string id;
  GammaSource gamma;
  std::optional<fs::path> checkpoint;
  neural::ExtConfig ext;
  neural::TrainConfig train;
};

struct EvalConfig {
  std::vector<std::size_t> t_grid{8, 16, 32, 64, 128};
  std::size_t n_traj = 100;
  std::size_t s = 8;
  std::size_t horizon = 200;
  std::size_t replicates = 500;
  double alpha = 0.9;
  std::vector<std::size_t> dims{1};
  std::vector<std::size_t> lengths{32};
  std::size_t mc_samples = 50;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::lengthgen;
  io::Json env = io::Json::object();
  std::uint64_t seed = 0;
  std::vector<ModelSpec> models;
  EvalConfig eval;
  fs::path output_dir;

  void validate() const;
};

/// Relative paths inside the document resolve against `base_dir`.
ExperimentConfig parse_config(const io::Json& doc, const fs::path& base_dir = {});
ExperimentConfig load_config(const fs::path& path);
io::Json config_to_json(const ExperimentConfig& cfg);

using Log = std::function<void(const std::string&)>;

/// A model ready for evaluation. Ext specs without a checkpoint are trained here.
struct MaterializedModel {
  std::string id;
  std::shared_ptr<const PredictiveModel> predictive;
  std::optional<neural::ExtModel> ext;
  std::vector<neural::LossRecord> curve;
  std::size_t trained_length = 0;
};

MaterializedModel materialize(const ModelSpec& spec, const blr::BlrEnv& env, const Log& log = {});

report::EvalReport run_lengthgen(const ExperimentConfig& cfg, const Log& log = {});
report::EvalReport run_posteriorgap(const ExperimentConfig& cfg, const Log& log = {});
/// Writes gamma_star_T<t>.json into out_dir when it is non-empty.
report::EvalReport run_gammastar(const ExperimentConfig& cfg, const fs::path& out_dir = {}, const Log& log = {});
/// Writes bootstrap_<model>.csv (+ sidecar) into out_dir when it is non-empty.
report::EvalReport run_bootstrap_demo(const ExperimentConfig& cfg, const fs::path& out_dir = {}, const Log& log = {});
report::EvalReport run_cid_probe(const ExperimentConfig& cfg, const Log& log = {});

report::EvalReport run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir = {}, const Log& log = {});

/// report.csv, report.json and optionally report.svg under out_dir.
void write_report(const report::EvalReport& report, const fs::path& out_dir, const std::string& stem, bool svg);

}  // namespace exlab::harness
