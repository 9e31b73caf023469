#pragma once

#include "lqa/tensor.hpp"

#include <optional>
#include <span>
#include <vector>

namespace lqa {

/// Axis-aligned box in normalized image coordinates.
struct BBox {
  Scalar cx = 0.5;
  Scalar cy = 0.5;
  Scalar w = 0;
  Scalar h = 0;

  Scalar x0() const { return cx - 0.5 * w; }
  Scalar y0() const { return cy - 0.5 * h; }
  Scalar x1() const { return cx + 0.5 * w; }
  Scalar y1() const { return cy + 0.5 * h; }
  /// From the corners, so that iou(a, a) is exactly 1.
  Scalar area() const { return (x1() - x0()) * (y1() - y0()); }

  static BBox from_corners(Scalar x0, Scalar y0, Scalar x1, Scalar y1);
  /// Intersects the box with [0,1]^2. Throws std::invalid_argument when
  /// nothing of positive area remains.
  BBox clipped() const;
  bool contains(Scalar x, Scalar y) const;
  bool operator==(const BBox&) const = default;
};

/// Intersection over union; 0 for disjoint boxes. A degenerate box (w or h
/// equal to 0) yields 0 and a warning on stderr.
Scalar iou(const BBox& a, const BBox& b);

struct PrecisionRecall {
  Scalar precision = 1;
  Scalar recall = 1;
  Index true_positives = 0;
  Index false_positives = 0;
  Index false_negatives = 0;
  // Set when a denominator was empty and the metric defaulted to 1.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

/// A prediction is a true positive iff its center lies inside the ground
/// truth box; samples without a prediction are false negatives.
PrecisionRecall center_rule_pr(std::span<const std::optional<BBox>> preds, std::span<const BBox> gts);

struct ClassificationMetrics {
  Scalar accuracy = 0;
  Scalar specificity = 1;
  Scalar sensitivity = 1;
  bool specificity_undefined = false;
  bool sensitivity_undefined = false;
};

ClassificationMetrics cls_metrics(std::span<const int> predicted, std::span<const int> truth);

struct MetricsReport {
  Scalar miou = 0;
  PrecisionRecall localization;
  ClassificationMetrics classification;
  std::vector<Scalar> per_sample_iou;
};

MetricsReport make_report(std::span<const std::optional<BBox>> preds, std::span<const BBox> gts,
                          std::span<const int> pred_labels, std::span<const int> true_labels);

}  // namespace lqa
