#include "lqa/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lqa {

Scalar layer_decay_lr(Scalar base_lr, int group, int num_groups, Scalar factor) {
  if (!(factor > 0 && factor <= 1)) throw std::invalid_argument("layer decay factor must be in (0, 1]");
  if (num_groups < 1 || group < 0 || group >= num_groups)
    throw std::invalid_argument("layer decay group " + std::to_string(group) + " outside [0, " +
                                std::to_string(num_groups) + ")");
  return base_lr * std::pow(factor, static_cast<Scalar>(num_groups - 1 - group));
}

void adamw_update(Vector& w, const Vector& grad, Vector& m, Vector& v, long step, Scalar lr,
                  const AdamWConfig& config) {
  w *= 1.0 - lr * config.weight_decay;
  m = config.beta1 * m + (1.0 - config.beta1) * grad;
  v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const Scalar bc1 = 1.0 - std::pow(config.beta1, static_cast<Scalar>(step));
  const Scalar bc2 = 1.0 - std::pow(config.beta2, static_cast<Scalar>(step));
  w.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config.eps);
}

AdamW::AdamW(ParameterSet& params, const AdamWConfig& config) : config_(config) {
  for (Parameter& p : params.entries()) {
    if (!p.trainable) continue;
    const Index n = p.value.size();
    states_.push_back({p.name, p.value, Vector::Zero(n), Vector::Zero(n), group_lr(p.group)});
  }
}

Scalar AdamW::group_lr(int group) const {
  return layer_decay_lr(config_.lr, group, config_.num_groups, config_.layer_decay);
}

void AdamW::step(const GradientMap& grads) {
  for (const State& s : states_) {
    const Vector* g = grads.find(s.param);
    if (g && !g->allFinite()) throw NumericalError("non-finite gradient for parameter " + s.name);
  }
  ++step_;
  const Vector none;
  for (State& s : states_) {
    const Vector* g = grads.find(s.param);
    const Vector zero = g ? none : Vector::Zero(s.param.size());
    adamw_update(s.param.mutable_data(), g ? *g : zero, s.m, s.v, step_, s.lr, config_);
  }
}

}  // namespace lqa
