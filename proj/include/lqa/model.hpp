#pragma once

#include "lqa/adapter.hpp"
#include "lqa/boxes.hpp"
#include "lqa/config.hpp"
#include "lqa/head.hpp"
#include "lqa/parameters.hpp"

namespace lqa {

/// LQ adapter plus single-box head over one parameter registry. Layer-decay
/// groups: spatial prior and initial queries in group 0, block i in group i,
/// head in the last group.
class Detector {
 public:
  explicit Detector(const Config& config);
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  const Config& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const LQAdapter& adapter() const { return adapter_; }
  const DetectHeadParams& head() const { return head_; }

  struct Output {
    LQAdapter::Output features;
    Tensor box;  // [1 x 4]
  };
  Output forward(const Tensor& image) const;
  BBox predict(const Tensor& image) const;

  /// Marks every parameter frozen.
  void freeze_all();

 private:
  Config config_;
  ParameterSet params_;
  LQAdapter adapter_;
  DetectHeadParams head_;
};

ParamCount param_count(const Detector& model);

}  // namespace lqa
