#pragma once

#include "lqa/parameters.hpp"
#include "lqa/tensor.hpp"

#include <vector>

namespace lqa {

struct AdamWConfig {
  Scalar lr = 6e-5;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
  Scalar weight_decay = 0.005;
  Scalar layer_decay = 0.65;
  /// Number of layer-decay groups; group K-1 (closest to the output) gets lr.
  int num_groups = 1;
};

/// base_lr * factor^(K - 1 - k).
Scalar layer_decay_lr(Scalar base_lr, int group, int num_groups, Scalar factor);

/// One decoupled-weight-decay Adam update of `w` in place; `step` is 1-based.
void adamw_update(Vector& w, const Vector& grad, Vector& m, Vector& v, long step, Scalar lr,
                  const AdamWConfig& config);

/// Holds moment state for the trainable parameters of a ParameterSet only.
class AdamW {
 public:
  AdamW(ParameterSet& params, const AdamWConfig& config);

  /// Throws NumericalError and leaves every parameter untouched if any
  /// gradient is non-finite.
  void step(const GradientMap& grads);

  long steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  Scalar group_lr(int group) const;
  std::size_t num_states() const { return states_.size(); }

 private:
  struct State {
    std::string name;
    Tensor param;
    Vector m, v;
    Scalar lr;
  };
  AdamWConfig config_;
  std::vector<State> states_;
  long step_ = 0;
};

}  // namespace lqa
