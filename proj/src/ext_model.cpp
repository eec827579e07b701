#include "exlab/ext_model.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "exlab/errors.hpp"

namespace exlab::neural {

std::string to_string(Arch a) { return a == Arch::exchangeable ? "exchangeable" : "gpt_style"; }

std::string to_string(PosMode p) {
  switch (p) {
    case PosMode::none: return "none";
    case PosMode::learned: return "learned";
    case PosMode::sinusoidal: return "sinusoidal";
    case PosMode::alternating01: return "alternating01";
  }
  return "none";
}

Arch arch_from_string(const std::string& s) {
  if (s == "exchangeable") return Arch::exchangeable;
  if (s == "gpt_style") return Arch::gpt_style;
  throw ContractError("unknown arch: " + s);
}

PosMode pos_mode_from_string(const std::string& s) {
  if (s == "none") return PosMode::none;
  if (s == "learned") return PosMode::learned;
  if (s == "sinusoidal") return PosMode::sinusoidal;
  if (s == "alternating01") return PosMode::alternating01;
  throw ContractError("unknown pos_mode: " + s);
}

ExtConfig ExtConfig::desk(std::size_t d) {
  ExtConfig c;
  c.d = d;
  return c;
}

ExtConfig ExtConfig::paper(std::size_t d) {
  ExtConfig c;
  c.d = d;
  c.n_embed_layers = 4;
  c.d_model = 64;
  c.d_ff = 128;
  c.n_heads = 4;
  c.n_layers = 12;
  return c;
}

void ExtConfig::validate() const {
  if (d == 0 || n_embed_layers == 0 || d_model == 0 || d_ff == 0 || n_heads == 0 || n_layers == 0) {
    throw ContractError("ext config: all sizes must be positive");
  }
  if (d_model % n_heads != 0) throw ContractError("ext config: d_model must be divisible by n_heads");
  if (!(logvar_min < logvar_max)) throw ContractError("ext config: logvar clamp must be an increasing pair");
  if (pos_mode == PosMode::learned && max_tokens == 0) throw ContractError("ext config: empty position table");
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values) n += static_cast<std::size_t>(v.size());
  return n;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ContractError("unknown parameter: " + name);
}

namespace {

Mat scaled_normal(Eigen::Index rows, Eigen::Index cols, double sd, RngStream rng) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = sd * rng.normal();
  return m;
}

Mat row_zeros(std::size_t n) { return Mat::Zero(1, static_cast<Eigen::Index>(n)); }
Mat row_ones(std::size_t n) { return Mat::Ones(1, static_cast<Eigen::Index>(n)); }

std::string block_name(std::size_t b, const char* leaf) { return "block." + std::to_string(b) + "." + leaf; }

}  // namespace

ExtModel ExtModel::init(const ExtConfig& config, std::uint64_t seed, HeadInit head) {
  config.validate();
  ExtModel model{config, {}};
  auto& ps = model.params;
  const RngStream root(seed, 0x5eedULL);
  auto add = [&](std::string name, Mat value) {
    ps.names.push_back(std::move(name));
    ps.values.push_back(std::move(value));
  };
  auto weight = [&](std::size_t in, std::size_t out) {
    return scaled_normal(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out),
                         1.0 / std::sqrt(static_cast<double>(in)), root.split(ps.size()));
  };
  const std::size_t dm = config.d_model;
  for (std::size_t l = 0; l < config.n_embed_layers; ++l) {
    const std::size_t in = l == 0 ? config.d + 1 : dm;
    add("embed." + std::to_string(l) + ".w", weight(in, dm));
    add("embed." + std::to_string(l) + ".b", row_zeros(dm));
  }
  if (config.pos_mode == PosMode::learned) {
    add("pos.table", scaled_normal(static_cast<Eigen::Index>(config.max_tokens), static_cast<Eigen::Index>(dm), 0.02,
                                   root.split(ps.size())));
  }
  for (std::size_t b = 0; b < config.n_layers; ++b) {
    add(block_name(b, "ln1.g"), row_ones(dm));
    add(block_name(b, "ln1.b"), row_zeros(dm));
    add(block_name(b, "attn.wqkv"), weight(dm, 3 * dm));
    add(block_name(b, "attn.bqkv"), row_zeros(3 * dm));
    add(block_name(b, "attn.wo"), weight(dm, dm));
    add(block_name(b, "attn.bo"), row_zeros(dm));
    add(block_name(b, "ln2.g"), row_ones(dm));
    add(block_name(b, "ln2.b"), row_zeros(dm));
    add(block_name(b, "mlp.w1"), weight(dm, config.d_ff));
    add(block_name(b, "mlp.b1"), row_zeros(config.d_ff));
    add(block_name(b, "mlp.w2"), weight(config.d_ff, dm));
    add(block_name(b, "mlp.b2"), row_zeros(dm));
  }
  add("lnf.g", row_ones(dm));
  add("lnf.b", row_zeros(dm));
  if (head == HeadInit::zero) {
    add("head.w", Mat::Zero(static_cast<Eigen::Index>(dm), 2));
  } else {
    add("head.w", weight(dm, 2));
  }
  add("head.b", Mat::Zero(1, 2));
  return model;
}

bool attends(Arch arch, const TokenDesc& query, const TokenDesc& key) {
  if (key.group != -1 && key.group != query.group) return false;
  if (arch == Arch::exchangeable) return key.kind == TokenKind::target && key.pair < query.pair;
  return key.layout_index() < query.layout_index();
}

BoolMat mask_for(Arch arch, std::span<const TokenDesc> tokens) {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  BoolMat m = BoolMat::Constant(n, n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      m(i, j) = i == j || attends(arch, tokens[static_cast<std::size_t>(i)], tokens[static_cast<std::size_t>(j)]);
    }
  }
  return m;
}

std::vector<TokenDesc> standard_layout(std::size_t pairs) {
  std::vector<TokenDesc> tokens;
  tokens.reserve(2 * pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    tokens.push_back({TokenKind::aux, i, -1});
    tokens.push_back({TokenKind::target, i, -1});
  }
  return tokens;
}

BoolMat build_mask(Arch arch, std::size_t pairs) {
  const auto tokens = standard_layout(pairs);
  return mask_for(arch, tokens);
}

ParamVars bind_params(Tape& tape, const ExtModel& model) {
  ParamVars pv;
  pv.vars.reserve(model.params.size());
  for (const auto& v : model.params.values) pv.vars.push_back(tape.leaf(v));
  return pv;
}

namespace {

Mat fixed_positions(const ExtConfig& cfg, std::span<const TokenDesc> tokens) {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const auto dm = static_cast<Eigen::Index>(cfg.d_model);
  Mat pe = Mat::Zero(n, dm);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = static_cast<double>(tokens[static_cast<std::size_t>(i)].layout_index());
    if (cfg.pos_mode == PosMode::sinusoidal) {
      for (Eigen::Index j = 0; j < dm; ++j) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (j / 2)) / static_cast<double>(dm));
        pe(i, j) = (j % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
      }
    } else if (cfg.pos_mode == PosMode::alternating01) {
      pe.row(i).setConstant(std::fmod(p, 2.0));
    }
  }
  return pe;
}

}  // namespace

Var forward_tokens(Tape& tape, const ExtModel& model, const ParamVars& pv, Var inputs,
                   std::span<const TokenDesc> tokens) {
  const ExtConfig& cfg = model.config;
  const ParamSet& ps = model.params;
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (tape.value(inputs).rows() != n || tape.value(inputs).cols() != static_cast<Eigen::Index>(cfg.d + 1)) {
    throw DimensionError("forward: token inputs must be n x (d+1)");
  }

  Var h = inputs;
  for (std::size_t l = 0; l < cfg.n_embed_layers; ++l) {
    const std::string prefix = "embed." + std::to_string(l);
    h = tape.add_row(tape.matmul(h, pv.at(ps, prefix + ".w")), pv.at(ps, prefix + ".b"));
    if (l + 1 < cfg.n_embed_layers) h = tape.gelu(h);
  }

  if (cfg.pos_mode == PosMode::learned) {
    std::vector<Eigen::Index> rows;
    rows.reserve(tokens.size());
    for (const auto& t : tokens) {
      if (t.layout_index() >= cfg.max_tokens) throw ContextLengthError("forward: position past the learned table");
      rows.push_back(static_cast<Eigen::Index>(t.layout_index()));
    }
    h = tape.add(h, tape.gather_rows(pv.at(ps, "pos.table"), rows));
  } else if (cfg.pos_mode != PosMode::none) {
    h = tape.add_const(h, fixed_positions(cfg, tokens));
  }

  const BoolMat mask = mask_for(cfg.arch, tokens);
  const auto dm = static_cast<Eigen::Index>(cfg.d_model);
  const auto heads = static_cast<Eigen::Index>(cfg.n_heads);
  const Eigen::Index dh = dm / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  for (std::size_t b = 0; b < cfg.n_layers; ++b) {
    const Var u = tape.layer_norm(h, pv.at(ps, block_name(b, "ln1.g")), pv.at(ps, block_name(b, "ln1.b")));
    const Var qkv = tape.add_row(tape.matmul(u, pv.at(ps, block_name(b, "attn.wqkv"))),
                                 pv.at(ps, block_name(b, "attn.bqkv")));
    std::vector<Var> head_out;
    head_out.reserve(static_cast<std::size_t>(heads));
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      const Var q = tape.slice_cols(qkv, hd * dh, dh);
      const Var k = tape.slice_cols(qkv, dm + hd * dh, dh);
      const Var v = tape.slice_cols(qkv, 2 * dm + hd * dh, dh);
      const Var scores = tape.scale(tape.matmul_nt(q, k), inv_sqrt_dh);
      head_out.push_back(tape.matmul(tape.softmax_masked(scores, mask), v));
    }
    const Var attn = tape.add_row(tape.matmul(tape.concat_cols(head_out), pv.at(ps, block_name(b, "attn.wo"))),
                                  pv.at(ps, block_name(b, "attn.bo")));
    h = tape.add(h, attn);

    const Var u2 = tape.layer_norm(h, pv.at(ps, block_name(b, "ln2.g")), pv.at(ps, block_name(b, "ln2.b")));
    const Var hidden = tape.gelu(tape.add_row(tape.matmul(u2, pv.at(ps, block_name(b, "mlp.w1"))),
                                              pv.at(ps, block_name(b, "mlp.b1"))));
    const Var mlp = tape.add_row(tape.matmul(hidden, pv.at(ps, block_name(b, "mlp.w2"))),
                                 pv.at(ps, block_name(b, "mlp.b2")));
    h = tape.add(h, mlp);
  }

  const Var uf = tape.layer_norm(h, pv.at(ps, "lnf.g"), pv.at(ps, "lnf.b"));
  const Var out = tape.add_row(tape.matmul(uf, pv.at(ps, "head.w")), pv.at(ps, "head.b"));
  const Var mean = tape.slice_cols(out, 0, 1);
  const Var logvar = tape.clamp(tape.slice_cols(out, 1, 1), cfg.logvar_min, cfg.logvar_max);
  const std::array<Var, 2> parts{mean, logvar};
  return tape.concat_cols(parts);
}

Mat sequence_inputs(const blr::Trajectory& traj) {
  traj.check();
  const auto t = static_cast<Eigen::Index>(traj.size());
  const auto d = traj.x.cols();
  Mat in = Mat::Zero(2 * t, d + 1);
  for (Eigen::Index i = 0; i < t; ++i) {
    in.block(2 * i, 0, 1, d) = traj.x.row(i);
    in.block(2 * i + 1, 0, 1, d) = traj.x.row(i);
    in(2 * i + 1, d) = traj.y[i];
  }
  return in;
}

SequenceOutputs forward_sequence(Tape& tape, const ExtModel& model, const ParamVars& pv, const blr::Trajectory& traj) {
  if (traj.dim() != model.config.d) throw DimensionError("forward: trajectory dimension does not match model");
  const auto tokens = standard_layout(traj.size());
  const Var inputs = tape.leaf(sequence_inputs(traj));
  const Var out = forward_tokens(tape, model, pv, inputs, tokens);
  std::vector<Eigen::Index> aux_rows(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) aux_rows[i] = static_cast<Eigen::Index>(2 * i);
  const Var aux = tape.gather_rows(out, aux_rows);
  return {tape.slice_cols(aux, 0, 1), tape.slice_cols(aux, 1, 1)};
}

std::vector<std::vector<Gaussian1>> forward(const ExtModel& model, std::span<const blr::Trajectory> batch) {
  if (!batch.empty()) {
    const std::size_t len = batch.front().size();
    for (const auto& traj : batch)
      if (traj.size() != len) throw DimensionError("forward: batch trajectories must share a length");
  }
  std::vector<std::vector<Gaussian1>> preds;
  preds.reserve(batch.size());
  for (const auto& traj : batch) {
    Tape tape;
    const ParamVars pv = bind_params(tape, model);
    const SequenceOutputs out = forward_sequence(tape, model, pv, traj);
    std::vector<Gaussian1> row(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      row[i] = {tape.value(out.mean)(r, 0), std::exp(tape.value(out.logvar)(r, 0))};
    }
    preds.push_back(std::move(row));
  }
  return preds;
}

double nll_loss(const std::vector<std::vector<Gaussian1>>& predictions, std::span<const blr::Trajectory> batch) {
  if (predictions.size() != batch.size()) throw DimensionError("nll_loss: batch size mismatch");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (predictions[b].size() != batch[b].size()) throw DimensionError("nll_loss: sequence length mismatch");
    for (std::size_t i = 0; i < predictions[b].size(); ++i) {
      validate(predictions[b][i]);
      total -= blr::gaussian_log_density(predictions[b][i], batch[b].y[static_cast<Eigen::Index>(i)]);
      ++count;
    }
  }
  if (count == 0) throw ContractError("nll_loss: empty batch");
  return total / static_cast<double>(count);
}

Var nll_tape(Tape& tape, const SequenceOutputs& out, const Vec& y) {
  const Var target = tape.leaf(Mat(y));
  const Var resid2 = tape.square(tape.sub(target, out.mean));
  const Var scaled = tape.mul(resid2, tape.exp(tape.scale(out.logvar, -1.0)));
  const Var per = tape.add_scalar(tape.add(out.logvar, scaled), std::log(2.0 * std::numbers::pi));
  return tape.scale(tape.mean(per), 0.5);
}

}  // namespace exlab::neural
