#include "lqa/boxes.hpp"

#include <algorithm>
#include <iostream>
#include <stdexcept>

namespace lqa {

BBox BBox::from_corners(Scalar x0, Scalar y0, Scalar x1, Scalar y1) {
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0};
}

BBox BBox::clipped() const {
  const Scalar nx0 = std::clamp(x0(), 0.0, 1.0), ny0 = std::clamp(y0(), 0.0, 1.0);
  const Scalar nx1 = std::clamp(x1(), 0.0, 1.0), ny1 = std::clamp(y1(), 0.0, 1.0);
  if (!(nx1 > nx0) || !(ny1 > ny0)) throw std::invalid_argument("box has no area inside the image");
  return from_corners(nx0, ny0, nx1, ny1);
}

bool BBox::contains(Scalar x, Scalar y) const { return x >= x0() && x <= x1() && y >= y0() && y <= y1(); }

Scalar iou(const BBox& a, const BBox& b) {
  if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0) {
    std::cerr << "warning: iou of a degenerate box is defined as 0\n";
    return 0;
  }
  const Scalar iw = std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0());
  const Scalar ih = std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0());
  if (iw <= 0 || ih <= 0) return 0;
  const Scalar inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

PrecisionRecall center_rule_pr(std::span<const std::optional<BBox>> preds, std::span<const BBox> gts) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("center_rule_pr: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(gts.size()) + " ground-truth boxes");
  PrecisionRecall pr;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!preds[i]) {
      ++pr.false_negatives;
    } else if (gts[i].contains(preds[i]->cx, preds[i]->cy)) {
      ++pr.true_positives;
    } else {
      ++pr.false_positives;
    }
  }
  const Index emitted = pr.true_positives + pr.false_positives;
  const Index relevant = pr.true_positives + pr.false_negatives;
  pr.precision_undefined = emitted == 0;
  pr.recall_undefined = relevant == 0;
  pr.precision = emitted == 0 ? 1.0 : static_cast<Scalar>(pr.true_positives) / static_cast<Scalar>(emitted);
  pr.recall = relevant == 0 ? 1.0 : static_cast<Scalar>(pr.true_positives) / static_cast<Scalar>(relevant);
  return pr;
}

ClassificationMetrics cls_metrics(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.empty()) throw std::invalid_argument("cls_metrics: empty input");
  if (predicted.size() != truth.size()) throw std::invalid_argument("cls_metrics: length mismatch");
  Index tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if ((predicted[i] != 0 && predicted[i] != 1) || (truth[i] != 0 && truth[i] != 1))
      throw std::invalid_argument("cls_metrics: labels must be 0 or 1");
    if (truth[i] == 1) {
      (predicted[i] == 1 ? tp : fn) += 1;
    } else {
      (predicted[i] == 0 ? tn : fp) += 1;
    }
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<Scalar>(tp + tn) / static_cast<Scalar>(predicted.size());
  m.specificity_undefined = tn + fp == 0;
  m.sensitivity_undefined = tp + fn == 0;
  m.specificity = m.specificity_undefined ? 1.0 : static_cast<Scalar>(tn) / static_cast<Scalar>(tn + fp);
  m.sensitivity = m.sensitivity_undefined ? 1.0 : static_cast<Scalar>(tp) / static_cast<Scalar>(tp + fn);
  return m;
}

MetricsReport make_report(std::span<const std::optional<BBox>> preds, std::span<const BBox> gts,
                          std::span<const int> pred_labels, std::span<const int> true_labels) {
  MetricsReport report;
  report.localization = center_rule_pr(preds, gts);
  report.classification = cls_metrics(pred_labels, true_labels);
  Scalar total = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const Scalar v = preds[i] ? iou(*preds[i], gts[i]) : 0.0;
    report.per_sample_iou.push_back(v);
    total += v;
  }
  report.miou = gts.empty() ? 0.0 : total / static_cast<Scalar>(gts.size());
  return report;
}

}  // namespace lqa
