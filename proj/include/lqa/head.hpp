#pragma once

#include "lqa/attention.hpp"
#include "lqa/boxes.hpp"
#include "lqa/parameters.hpp"
#include "lqa/spatial_prior.hpp"

namespace lqa {

/// Single-box regression head: per-scale mean pool, concat, GELU MLP, then a
/// logistic squash to (cx, cy, w, h) in (0, 1).
struct DetectHeadParams {
  Linear hidden;
  Linear output;
};

DetectHeadParams make_detect_head(ParameterSet& params, Index dim, Index hidden, int group);

/// Returns a [1 x 4] tensor (cx, cy, w, h).
Tensor detect_head(const MultiScaleTokens& sp, const DetectHeadParams& p);
BBox to_box(const Tensor& prediction);

/// L1(cx, cy, w, h) + (1 - IoU) against a constant ground-truth box. Kinks
/// (ties in min/max, zero differences in |.|) take subgradient 0.
Tensor box_loss(const Tensor& prediction, const BBox& gt);
Scalar box_loss_value(const BBox& pred, const BBox& gt);

}  // namespace lqa
