#include "lqa/model.hpp"

namespace lqa {

namespace {

const Config& validated(const Config& c) {
  c.validate();
  return c;
}

}  // namespace

Detector::Detector(const Config& config)
    : config_(validated(config)), params_(config.seed), adapter_(config_.backbone, config_.adapter, params_) {
  config_.optim.num_groups = static_cast<int>(config_.adapter.num_blocks);
  head_ = make_detect_head(params_, config_.backbone.dim, config_.head_hidden, config_.optim.num_groups - 1);
}

Detector::Output Detector::forward(const Tensor& image) const {
  LQAdapter::Output features = adapter_.forward(image);
  Tensor box = detect_head(features.spatial, head_);
  return {std::move(features), std::move(box)};
}

BBox Detector::predict(const Tensor& image) const { return to_box(forward(image).box); }

void Detector::freeze_all() {
  for (Parameter& p : params_.entries()) params_.set_trainable(p, false);
}

ParamCount param_count(const Detector& model) { return count_parameters(model.params()); }

}  // namespace lqa
