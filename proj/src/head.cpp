#include "lqa/head.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace lqa {

DetectHeadParams make_detect_head(ParameterSet& params, Index dim, Index hidden, int group) {
  const Index pooled = dim * static_cast<Index>(kNumScales);
  return {make_linear(params, "head.hidden", pooled, hidden, true, group),
          make_linear(params, "head.output", hidden, 4, true, group)};
}

Tensor detect_head(const MultiScaleTokens& sp, const DetectHeadParams& p) {
  std::array<Tensor, kNumScales> pooled;
  for (std::size_t i = 0; i < kNumScales; ++i) pooled[i] = mean_rows(sp.scale(i));
  const Tensor features = concat_cols(pooled);
  return sigmoid(linear(gelu(linear(features, p.hidden)), p.output));
}

BBox to_box(const Tensor& prediction) {
  if (prediction.size() != 4) throw ShapeError("to_box: expected 4 values, got " + to_string(prediction.shape()));
  return {prediction[0], prediction[1], prediction[2], prediction[3]};
}

namespace {

Scalar sign(Scalar v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }
Scalar step(bool condition) { return condition ? 1.0 : 0.0; }

}  // namespace

Scalar box_loss_value(const BBox& pred, const BBox& gt) {
  const Scalar l1 = std::abs(pred.cx - gt.cx) + std::abs(pred.cy - gt.cy) + std::abs(pred.w - gt.w) +
                    std::abs(pred.h - gt.h);
  return l1 + 1.0 - iou(pred, gt);
}

Tensor box_loss(const Tensor& prediction, const BBox& gt) {
  const BBox p = to_box(prediction);
  const std::array<Scalar, 4> diff{p.cx - gt.cx, p.cy - gt.cy, p.w - gt.w, p.h - gt.h};

  Vector grad(4);
  for (std::size_t i = 0; i < 4; ++i) grad[static_cast<Index>(i)] = sign(diff[i]);

  Scalar overlap = 0;
  const Scalar ix = std::min(p.x1(), gt.x1()) - std::max(p.x0(), gt.x0());
  const Scalar iy = std::min(p.y1(), gt.y1()) - std::max(p.y0(), gt.y0());
  if (p.w > 0 && p.h > 0 && ix > 0 && iy > 0) {
    const Scalar inter = ix * iy;
    const Scalar uni = p.area() + gt.area() - inter;
    overlap = inter / uni;
    const Scalar d_inter = (uni + inter) / (uni * uni);
    const Scalar d_area = -inter / (uni * uni);
    // d(ix)/d(cx), d(ix)/d(w) and the same along y.
    const Scalar right = step(p.x1() < gt.x1()), left = step(p.x0() > gt.x0());
    const Scalar bottom = step(p.y1() < gt.y1()), top = step(p.y0() > gt.y0());
    const Scalar dix_dcx = right - left, dix_dw = 0.5 * (right + left);
    const Scalar diy_dcy = bottom - top, diy_dh = 0.5 * (bottom + top);
    // loss carries -IoU.
    grad[0] -= d_inter * iy * dix_dcx;
    grad[1] -= d_inter * ix * diy_dcy;
    grad[2] -= d_inter * iy * dix_dw + d_area * p.h;
    grad[3] -= d_inter * ix * diy_dh + d_area * p.w;
  }

  Scalar l1 = 0;
  for (Scalar d : diff) l1 += std::abs(d);
  Vector value(1);
  value[0] = l1 + 1.0 - overlap;
  return record_op({1}, std::move(value), {prediction},
                   {[grad = std::move(grad)](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g[0] * grad;
                   }});
}

}  // namespace lqa
