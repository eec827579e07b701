#pragma once

// Checkpoint = JSON manifest + flat little-endian binary of 64-bit doubles.
// Tensors are stored row-major, one after another, in manifest order.

#include <filesystem>
#include <optional>

#include "exlab/ext_model.hpp"
#include "exlab/training.hpp"

namespace exlab::neural {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  std::optional<TrainConfig> train;  // echoed when the model came from train()
};

struct Checkpoint {
  ExtModel model;
  CheckpointMeta meta;
};

/// Writes `manifest` and a sibling binary named after it with ".bin".
void save_checkpoint(const std::filesystem::path& manifest, const ExtModel& model, const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::filesystem::path& manifest);

}  // namespace exlab::neural
