#pragma once

// Incremental inference for ExtModel with a per-layer key/value cache.
//
// Target tokens never attend to auxiliary tokens in the exchangeable layout,
// so only targets are cached there; gpt_style caches both kinds. Results agree
// with the tape forward to rounding.

#include <memory>

#include "exlab/ext_model.hpp"
#include "exlab/predictive.hpp"

namespace exlab::neural {

class ExtPredictive final : public PredictiveModel {
 public:
  explicit ExtPredictive(std::shared_ptr<const ExtModel> model, std::string id = "ext");

  std::size_t dim() const override { return model_->config.d; }
  std::string id() const override { return id_; }
  std::unique_ptr<PredictiveSession> start() const override;

  const ExtModel& model() const { return *model_; }

 private:
  std::shared_ptr<const ExtModel> model_;
  std::string id_;
};

}  // namespace exlab::neural
