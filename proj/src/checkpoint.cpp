#include "exlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "exlab/errors.hpp"
#include "exlab/io.hpp"

namespace exlab::neural {

namespace fs = std::filesystem;

namespace {

fs::path binary_path(const fs::path& manifest) {
  fs::path bin = manifest;
  bin.replace_extension(".bin");
  return bin;
}

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.append(buf, 8);
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const fs::path& manifest, const ExtModel& model, const CheckpointMeta& meta) {
  const fs::path bin = binary_path(manifest);
  if (bin == manifest) throw IoError("checkpoint: manifest must not end in .bin");
  io::Json tensors = io::Json::array();
  std::string blob;
  blob.reserve(model.params.scalar_count() * 8);
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    const Mat& v = model.params.values[k];
    tensors.push_back({{"name", model.params.names[k]}, {"rows", v.rows()}, {"cols", v.cols()}});
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) put_le(blob, v(i, j));
  }
  io::Json doc = {{"format", "exlab-checkpoint"},
                  {"format_version", kCheckpointVersion},
                  {"config", io::to_json(model.config)},
                  {"seed", meta.seed},
                  {"steps", meta.steps},
                  {"binary", bin.filename().string()},
                  {"byte_order", "little"},
                  {"layout", "row_major"},
                  {"scalar_count", model.params.scalar_count()},
                  {"tensors", tensors}};
  if (meta.train) doc["train"] = io::to_json(*meta.train);
  io::write_text(bin, blob);
  io::write_json(manifest, doc);
}

Checkpoint load_checkpoint(const fs::path& manifest) {
  const io::Json doc = io::read_json(manifest);
  if (doc.value("format", "") != "exlab-checkpoint") throw IoError("checkpoint: not a checkpoint manifest");
  if (doc.value("format_version", 0) != kCheckpointVersion) throw IoError("checkpoint: unsupported format_version");
  Checkpoint ck;
  ck.model.config = io::ext_config_from_json(doc.at("config"), ExtConfig{});
  ck.meta.seed = doc.value<std::uint64_t>("seed", 0);
  ck.meta.steps = doc.value<std::size_t>("steps", 0);
  if (doc.contains("train")) ck.meta.train = io::train_config_from_json(doc.at("train"), TrainConfig{});

  const std::string blob = io::read_text(manifest.parent_path() / doc.at("binary").get<std::string>());
  const std::size_t expected = doc.at("scalar_count").get<std::size_t>();
  if (blob.size() != expected * 8) throw IoError("checkpoint: binary size does not match manifest");

  // Layout must match what init() produces for this config.
  const ExtModel shape = ExtModel::init(ck.model.config, 0, HeadInit::zero);
  const auto& tensors = doc.at("tensors");
  if (tensors.size() != shape.params.size()) throw IoError("checkpoint: tensor count does not match config");
  std::size_t offset = 0;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const auto& t = tensors[k];
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const Mat& ref = shape.params.values[k];
    if (name != shape.params.names[k] || rows != ref.rows() || cols != ref.cols()) {
      throw IoError("checkpoint: tensor " + name + " does not match config layout");
    }
    Mat v(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        v(i, j) = get_le(blob.data() + offset);
        offset += 8;
      }
    }
    ck.model.params.names.push_back(name);
    ck.model.params.values.push_back(std::move(v));
  }
  return ck;
}

}  // namespace exlab::neural
