#pragma once

// Exchangeable Transformer and its positional-embedding baselines.
//
// Every (x, y) pair becomes two tokens: an auxiliary token (x, 0) and a target
// token (x, y), interleaved as [a_0, g_0, a_1, g_1, ...]. The prediction for
// pair i is read from the head at a_i. In the exchangeable architecture both
// a_i and g_i attend to themselves and to the targets g_j with j < i; the
// gpt_style baseline uses a plain causal mask over the same layout.

#include <cstdint>
#include <string>
#include <vector>

#include "exlab/blr_env.hpp"
#include "exlab/tape.hpp"

namespace exlab::neural {

enum class Arch { exchangeable, gpt_style };
enum class PosMode { none, learned, sinusoidal, alternating01 };
enum class HeadInit { zero, random };

std::string to_string(Arch a);
std::string to_string(PosMode p);
Arch arch_from_string(const std::string& s);
PosMode pos_mode_from_string(const std::string& s);

struct ExtConfig {
  std::size_t d = 1;
  std::size_t n_embed_layers = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  PosMode pos_mode = PosMode::none;
  Arch arch = Arch::exchangeable;
  double logvar_min = -10.0;
  double logvar_max = 10.0;
  std::size_t max_tokens = 512;  // size of the learned position table

  static ExtConfig desk(std::size_t d);
  static ExtConfig paper(std::size_t d);
  void validate() const;
};

/// Named parameter tensors in a fixed, config-determined order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Mat> values;

  std::size_t size() const { return values.size(); }
  std::size_t scalar_count() const;
  std::size_t index_of(const std::string& name) const;
  const Mat& at(const std::string& name) const { return values[index_of(name)]; }
  Mat& at(const std::string& name) { return values[index_of(name)]; }
};

struct ExtModel {
  ExtConfig config;
  ParamSet params;

  /// Scaled-normal weights (variance 1 / fan-in), zero biases, unit LN gains.
  static ExtModel init(const ExtConfig& config, std::uint64_t seed, HeadInit head = HeadInit::zero);
};

enum class TokenKind : int { aux = 0, target = 1 };

struct TokenDesc {
  TokenKind kind = TokenKind::aux;
  std::size_t pair = 0;
  int group = -1;  // -1: shared prefix visible to every group

  std::size_t layout_index() const { return 2 * pair + static_cast<std::size_t>(kind); }
};

/// Attention rule between a query token and a key token (distinct indices).
bool attends(Arch arch, const TokenDesc& query, const TokenDesc& key);

BoolMat mask_for(Arch arch, std::span<const TokenDesc> tokens);

/// Standard interleaved layout for t pairs.
std::vector<TokenDesc> standard_layout(std::size_t pairs);

/// 2T x 2T permission matrix over the interleaved layout.
BoolMat build_mask(Arch arch, std::size_t pairs);

struct ParamVars {
  std::vector<Var> vars;
  Var at(const ParamSet& ps, const std::string& name) const { return vars[ps.index_of(name)]; }
};

ParamVars bind_params(Tape& tape, const ExtModel& model);

/// Head output (n x 2: mean, clamped log-variance) for an arbitrary token set.
Var forward_tokens(Tape& tape, const ExtModel& model, const ParamVars& pv, Var inputs,
                   std::span<const TokenDesc> tokens);

/// Token inputs (2T x (d+1)) for a trajectory in the standard layout.
Mat sequence_inputs(const blr::Trajectory& traj);

struct SequenceOutputs {
  Var mean;    // T x 1
  Var logvar;  // T x 1
};

SequenceOutputs forward_sequence(Tape& tape, const ExtModel& model, const ParamVars& pv, const blr::Trajectory& traj);

/// Per-pair predictive Gaussians for every trajectory of the batch.
std::vector<std::vector<Gaussian1>> forward(const ExtModel& model, std::span<const blr::Trajectory> batch);

/// Mean over batch and positions of 0.5 [log(2 pi v) + (y - mu)^2 / v].
double nll_loss(const std::vector<std::vector<Gaussian1>>& predictions, std::span<const blr::Trajectory> batch);

/// Tape form of nll_loss for one sequence (mean over positions).
Var nll_tape(Tape& tape, const SequenceOutputs& out, const Vec& y);

}  // namespace exlab::neural
