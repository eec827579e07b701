#pragma once

// File formats. Every JSON document carries "format_version"; CSV values are
// written with 17 significant digits so a parse reproduces them exactly.
//
//   trajectory    <name>.csv  t,x_1..x_d,y          + <name>.csv.json {seed, stream, env, w}
//   gamma         <name>.json {d, gamma (row-major), provenance}
//   loss curve    <name>.csv  step,nll,cid,total
//   bootstrap     <name>.csv  b,theta_1..theta_d    + <name>.csv.json {context_hash, config, seed}

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "exlab/blr_env.hpp"
#include "exlab/ext_model.hpp"
#include "exlab/inference.hpp"
#include "exlab/training.hpp"

namespace exlab::io {

using Json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

std::string format_double(double v);
double parse_double(const std::string& s);

std::string read_text(const fs::path& path);
/// Creates missing parent directories. Throws IoError on failure.
void write_text(const fs::path& path, const std::string& text);
Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& doc);

/// Rows of a simple comma-separated file (no quoting), header included.
std::vector<std::vector<std::string>> read_csv(const fs::path& path);

fs::path sidecar_path(const fs::path& csv);

Json to_json(const blr::BlrEnv& env);
blr::BlrEnv env_from_json(const Json& j);

Json to_json(const neural::ExtConfig& cfg);
neural::ExtConfig ext_config_from_json(const Json& j, const neural::ExtConfig& base);

Json to_json(const neural::TrainConfig& cfg);
neural::TrainConfig train_config_from_json(const Json& j, const neural::TrainConfig& base);

Json to_json(const inference::BootstrapConfig& cfg);

Json matrix_to_json(const Mat& m);  // array of rows
Mat matrix_from_json(const Json& j);

struct TrajectoryFile {
  blr::Trajectory traj;
  std::optional<blr::BlrEnv> env;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

void write_trajectory(const fs::path& csv, const blr::Trajectory& traj, const blr::BlrEnv& env, std::uint64_t seed,
                      std::uint64_t stream);
TrajectoryFile read_trajectory(const fs::path& csv);

void write_gamma(const fs::path& path, const Mat& gamma, const Json& provenance);
Mat read_gamma(const fs::path& path);

void write_loss_csv(const fs::path& path, std::span<const neural::LossRecord> curve);
std::vector<neural::LossRecord> read_loss_csv(const fs::path& path);

/// FNV-1a over the little-endian bytes of (T, d, x row-major, y).
std::uint64_t context_hash(const blr::Trajectory& context);

void write_bootstrap(const fs::path& csv, const inference::BootstrapDraws& draws, const blr::Trajectory& context);
std::vector<Vec> read_bootstrap_csv(const fs::path& csv);

}  // namespace exlab::io
