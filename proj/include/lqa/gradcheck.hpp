#pragma once

#include "lqa/model.hpp"
#include "lqa/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lqa {

struct GradCheckEntry {
  std::string name;
  Index size = 0;
  /// ||analytic - numeric|| / max(||analytic||, ||numeric||, h).
  Scalar rel_error = 0;
  Scalar analytic_norm = 0;
  Scalar numeric_norm = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  Scalar worst = 0;
  bool passed(Scalar tol) const { return worst < tol; }
};

/// The floor keeps structurally zero gradients (an attention key bias shifts
/// every logit of a row equally) from comparing rounding noise with itself.
Scalar relative_error(const Vector& analytic, const Vector& numeric, Scalar floor = 0);

/// Central differences of `loss` (rebuilt from scratch on every call) with
/// respect to every element of each leaf, compared with one reverse pass.
GradCheckReport finite_difference_check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                                        const std::vector<std::string>& names = {}, Scalar h = 1e-5);

/// Scalar probe covering every trainable parameter: fixed random weights
/// applied to the head output and to the pooled final backbone tokens.
Tensor pooled_probe_loss(const Detector& model, const Tensor& image, std::uint64_t seed);

/// Moves zero-initialized gates and queries to random nonzero values so every
/// trainable path carries gradient.
void randomize_gates(Detector& model, std::uint64_t seed, Scalar stddev = 0.5);

/// End-to-end check of every trainable parameter of `model`.
GradCheckReport gradcheck_model(Detector& model, std::uint64_t seed, Scalar h = 1e-5);

}  // namespace lqa
