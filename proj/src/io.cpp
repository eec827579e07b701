#include "exlab/io.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "exlab/errors.hpp"

namespace exlab::io {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') throw IoError("not a number: '" + s + "'");
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw IoError("bad JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

fs::path sidecar_path(const fs::path& csv) { return fs::path(csv.string() + ".json"); }

namespace {

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

Json matrix_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty()) throw IoError("matrix must be a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw IoError("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Json to_json(const blr::BlrEnv& env) {
  return {{"d", env.d}, {"tau2", env.tau2}, {"sigma2", env.sigma2}, {"h", matrix_to_json(env.h)}};
}

blr::BlrEnv env_from_json(const Json& j) {
  const auto d = get_or<std::size_t>(j, "d", 1);
  const double tau2 = get_or<double>(j, "tau2", 1.0);
  const double sigma2 = get_or<double>(j, "sigma2", 1.0);
  if (j.contains("h")) return blr::BlrEnv::make(d, tau2, sigma2, matrix_from_json(j.at("h")));
  return blr::BlrEnv::isotropic(d, tau2, sigma2);
}

Json to_json(const neural::ExtConfig& cfg) {
  return {{"d", cfg.d},
          {"n_embed_layers", cfg.n_embed_layers},
          {"d_model", cfg.d_model},
          {"d_ff", cfg.d_ff},
          {"n_heads", cfg.n_heads},
          {"n_layers", cfg.n_layers},
          {"pos_mode", neural::to_string(cfg.pos_mode)},
          {"arch", neural::to_string(cfg.arch)},
          {"logvar_clamp", {cfg.logvar_min, cfg.logvar_max}},
          {"max_tokens", cfg.max_tokens}};
}

neural::ExtConfig ext_config_from_json(const Json& j, const neural::ExtConfig& base) {
  neural::ExtConfig c = base;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    const auto d = get_or<std::size_t>(j, "d", base.d);
    if (preset == "desk") {
      c = neural::ExtConfig::desk(d);
    } else if (preset == "paper") {
      c = neural::ExtConfig::paper(d);
    } else {
      throw ContractError("unknown model preset: " + preset);
    }
  }
  c.d = get_or(j, "d", c.d);
  c.n_embed_layers = get_or(j, "n_embed_layers", c.n_embed_layers);
  c.d_model = get_or(j, "d_model", c.d_model);
  c.d_ff = get_or(j, "d_ff", c.d_ff);
  c.n_heads = get_or(j, "n_heads", c.n_heads);
  c.n_layers = get_or(j, "n_layers", c.n_layers);
  if (j.contains("pos_mode")) c.pos_mode = neural::pos_mode_from_string(j.at("pos_mode").get<std::string>());
  if (j.contains("arch")) c.arch = neural::arch_from_string(j.at("arch").get<std::string>());
  if (j.contains("logvar_clamp")) {
    const auto& lc = j.at("logvar_clamp");
    c.logvar_min = lc.at(0).get<double>();
    c.logvar_max = lc.at(1).get<double>();
  }
  c.max_tokens = get_or(j, "max_tokens", c.max_tokens);
  c.validate();
  return c;
}

Json to_json(const neural::TrainConfig& cfg) {
  return {{"batch", cfg.batch},
          {"steps", cfg.steps},
          {"lr", cfg.lr},
          {"seq_len", cfg.seq_len},
          {"lambda_cid", cfg.lambda_cid},
          {"mc_samples", cfg.mc_samples},
          {"augment", cfg.augment},
          {"seed", cfg.seed}};
}

neural::TrainConfig train_config_from_json(const Json& j, const neural::TrainConfig& base) {
  neural::TrainConfig c = base;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "desk") {
      c = neural::TrainConfig::desk();
    } else if (preset == "paper") {
      c = neural::TrainConfig::paper();
    } else {
      throw ContractError("unknown training preset: " + preset);
    }
    c.seed = base.seed;
  }
  c.batch = get_or(j, "batch", c.batch);
  c.steps = get_or(j, "steps", c.steps);
  c.lr = get_or(j, "lr", c.lr);
  c.seq_len = get_or(j, "seq_len", c.seq_len);
  c.lambda_cid = get_or(j, "lambda_cid", c.lambda_cid);
  c.mc_samples = get_or(j, "mc_samples", c.mc_samples);
  c.augment = get_or(j, "augment", c.augment);
  c.seed = get_or(j, "seed", c.seed);
  c.validate();
  return c;
}

Json to_json(const inference::BootstrapConfig& cfg) {
  return {{"s", cfg.s},
          {"T", cfg.horizon},
          {"B", cfg.replicates},
          {"statistic", inference::to_string(cfg.stat)},
          {"seed", cfg.seed},
          {"stream", cfg.stream}};
}

void write_trajectory(const fs::path& csv, const blr::Trajectory& traj, const blr::BlrEnv& env, std::uint64_t seed,
                      std::uint64_t stream) {
  traj.check();
  std::string text = "t";
  for (std::size_t j = 1; j <= traj.dim(); ++j) text += ",x_" + std::to_string(j);
  text += ",y\n";
  for (Eigen::Index t = 0; t < traj.y.size(); ++t) {
    text += std::to_string(t + 1);
    for (Eigen::Index j = 0; j < traj.x.cols(); ++j) text += "," + format_double(traj.x(t, j));
    text += "," + format_double(traj.y[t]) + "\n";
  }
  write_text(csv, text);
  Json side = {{"format_version", kFormatVersion}, {"seed", seed}, {"stream", stream}, {"env", to_json(env)}};
  if (traj.w) {
    side["w"] = std::vector<double>(traj.w->data(), traj.w->data() + traj.w->size());
  } else {
    side["w"] = nullptr;
  }
  write_json(sidecar_path(csv), side);
}

TrajectoryFile read_trajectory(const fs::path& csv) {
  const auto rows = read_csv(csv);
  if (rows.empty() || rows[0].size() < 3 || rows[0].front() != "t" || rows[0].back() != "y") {
    throw IoError("trajectory csv: bad header in " + csv.string());
  }
  const auto d = static_cast<Eigen::Index>(rows[0].size() - 2);
  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  TrajectoryFile f;
  f.traj.x.resize(n, d);
  f.traj.y.resize(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t + 1)];
    if (static_cast<Eigen::Index>(r.size()) != d + 2) throw IoError("trajectory csv: ragged row");
    for (Eigen::Index j = 0; j < d; ++j) f.traj.x(t, j) = parse_double(r[static_cast<std::size_t>(j + 1)]);
    f.traj.y[t] = parse_double(r.back());
  }
  const fs::path side = sidecar_path(csv);
  if (fs::exists(side)) {
    const Json j = read_json(side);
    f.seed = get_or<std::uint64_t>(j, "seed", 0);
    f.stream = get_or<std::uint64_t>(j, "stream", 0);
    if (j.contains("env")) f.env = env_from_json(j.at("env"));
    if (j.contains("w") && j.at("w").is_array()) {
      const auto w = j.at("w").get<std::vector<double>>();
      f.traj.w = Eigen::Map<const Vec>(w.data(), static_cast<Eigen::Index>(w.size()));
    }
  }
  return f;
}

void write_gamma(const fs::path& path, const Mat& gamma, const Json& provenance) {
  std::vector<double> flat;
  for (Eigen::Index i = 0; i < gamma.rows(); ++i)
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) flat.push_back(gamma(i, j));
  write_json(path, {{"format_version", kFormatVersion},
                    {"d", gamma.rows()},
                    {"gamma", flat},
                    {"provenance", provenance}});
}

Mat read_gamma(const fs::path& path) {
  const Json j = read_json(path);
  const auto d = j.at("d").get<Eigen::Index>();
  const auto flat = j.at("gamma").get<std::vector<double>>();
  if (d <= 0 || static_cast<Eigen::Index>(flat.size()) != d * d) throw IoError("gamma file: expected d*d entries");
  Mat g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index k = 0; k < d; ++k) g(i, k) = flat[static_cast<std::size_t>(i * d + k)];
  return g;
}

void write_loss_csv(const fs::path& path, std::span<const neural::LossRecord> curve) {
  std::string text = "step,nll,cid,total\n";
  for (const auto& r : curve) {
    text += std::to_string(r.step) + "," + format_double(r.nll) + "," + format_double(r.cid) + "," +
            format_double(r.total) + "\n";
  }
  write_text(path, text);
}

std::vector<neural::LossRecord> read_loss_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0] != std::vector<std::string>{"step", "nll", "cid", "total"}) {
    throw IoError("loss csv: bad header in " + path.string());
  }
  std::vector<neural::LossRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 4) throw IoError("loss csv: ragged row");
    out.push_back({static_cast<std::size_t>(std::stoull(r[0])), parse_double(r[1]), parse_double(r[2]),
                   parse_double(r[3])});
  }
  return out;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;

  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
    bytes(&v, sizeof v);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

}  // namespace

std::uint64_t context_hash(const blr::Trajectory& context) {
  context.check();
  Fnv1a f;
  f.u64(context.size());
  f.u64(static_cast<std::uint64_t>(context.x.cols()));
  for (Eigen::Index t = 0; t < context.x.rows(); ++t)
    for (Eigen::Index j = 0; j < context.x.cols(); ++j) f.f64(context.x(t, j));
  for (Eigen::Index t = 0; t < context.y.size(); ++t) f.f64(context.y[t]);
  return f.h;
}

void write_bootstrap(const fs::path& csv, const inference::BootstrapDraws& draws, const blr::Trajectory& context) {
  std::string text = "b";
  for (std::size_t j = 1; j <= draws.dim(); ++j) text += ",theta_" + std::to_string(j);
  text += "\n";
  for (std::size_t b = 0; b < draws.size(); ++b) {
    text += std::to_string(b);
    for (Eigen::Index j = 0; j < draws.values[b].size(); ++j) text += "," + format_double(draws.values[b][j]);
    text += "\n";
  }
  write_text(csv, text);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(context_hash(context)));
  write_json(sidecar_path(csv), {{"format_version", kFormatVersion},
                                 {"context_hash", hash},
                                 {"config", to_json(draws.config)},
                                 {"seed", draws.config.seed}});
}

std::vector<Vec> read_bootstrap_csv(const fs::path& csv) {
  const auto rows = read_csv(csv);
  if (rows.empty() || rows[0].empty() || rows[0][0] != "b") throw IoError("bootstrap csv: bad header");
  const auto d = static_cast<Eigen::Index>(rows[0].size() - 1);
  std::vector<Vec> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d + 1) throw IoError("bootstrap csv: ragged row");
    Vec v(d);
    for (Eigen::Index j = 0; j < d; ++j) v[j] = parse_double(rows[i][static_cast<std::size_t>(j + 1)]);
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace exlab::io
