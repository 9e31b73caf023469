#include "lqa/boxes.hpp"
#include "lqa/head.hpp"
#include "lqa/optim.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace lqa;
using lqa::test::random_tensor;

namespace {

BBox random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  return {u(rng), u(rng), 0.01 + 0.99 * u(rng), 0.01 + 0.99 * u(rng)};
}

// Independent oracle: rasterize both boxes on a fine grid.
Scalar raster_iou(const BBox& a, const BBox& b, int n) {
  long inter = 0, uni = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Scalar x = -0.5 + 2.0 * (i + 0.5) / n, y = -0.5 + 2.0 * (j + 0.5) / n;
      const bool in_a = a.x0() <= x && x <= a.x1() && a.y0() <= y && y <= a.y1();
      const bool in_b = b.x0() <= x && x <= b.x1() && b.y0() <= y && y <= b.y1();
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return uni == 0 ? 0.0 : static_cast<Scalar>(inter) / static_cast<Scalar>(uni);
}

}  // namespace

TEST_CASE("iou examples") {
  const BBox a = BBox::from_corners(0, 0, 2, 2);
  const BBox b = BBox::from_corners(1, 1, 3, 3);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BBox::from_corners(5, 5, 6, 6)) == 0.0);
  CHECK(iou(a, BBox::from_corners(2, 0, 3, 2)) == 0.0);  // touching edge
  CHECK(iou(a, BBox{1, 1, 0, 1}) == 0.0);                // degenerate, warns
}

TEST_CASE("iou properties on 10000 random boxes") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 10000; ++trial) {
    const BBox a = random_box(rng), b = random_box(rng);
    const Scalar v = iou(a, b);
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
    REQUIRE(v == iou(b, a));
    REQUIRE(iou(a, a) == 1.0);
  }
}

TEST_CASE("iou agrees with a rasterized count") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const BBox a = random_box(rng), b = random_box(rng);
    CHECK(iou(a, b) == doctest::Approx(raster_iou(a, b, 800)).epsilon(0.02));
  }
}

TEST_CASE("clipping keeps boxes inside the unit square") {
  const BBox c = BBox{0.9, 0.5, 0.4, 0.2}.clipped();
  CHECK(c.x1() == doctest::Approx(1.0));
  CHECK(c.x0() == doctest::Approx(0.7));
  CHECK(c.h == doctest::Approx(0.2));
  CHECK_THROWS_AS((BBox{2.0, 0.5, 0.2, 0.2}.clipped()), std::invalid_argument);
}

TEST_CASE("center rule precision and recall") {
  const BBox gt{0.5, 0.5, 0.2, 0.2};
  const BBox inside{0.55, 0.45, 0.5, 0.5}, outside{0.9, 0.9, 0.1, 0.1};

  SUBCASE("all centers inside") {
    const std::vector<std::optional<BBox>> p{inside, inside, gt};
    const std::vector<BBox> g{gt, gt, gt};
    const PrecisionRecall r = center_rule_pr(p, g);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
  }
  SUBCASE("one inside, one outside") {
    const std::vector<std::optional<BBox>> p{inside, outside};
    const std::vector<BBox> g{gt, gt};
    const PrecisionRecall r = center_rule_pr(p, g);
    CHECK(r.precision == 0.5);
    CHECK(r.recall == 1.0);
    CHECK(r.false_positives == 1);
  }
  SUBCASE("one missing prediction") {
    const std::vector<std::optional<BBox>> p{inside, std::nullopt};
    const std::vector<BBox> g{gt, gt};
    const PrecisionRecall r = center_rule_pr(p, g);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 0.5);
    CHECK(r.false_negatives == 1);
  }
  SUBCASE("no predictions at all") {
    const std::vector<std::optional<BBox>> p{std::nullopt};
    const std::vector<BBox> g{gt};
    const PrecisionRecall r = center_rule_pr(p, g);
    CHECK(r.precision == 1.0);
    CHECK(r.precision_undefined);
    CHECK(r.recall == 0.0);
  }
  SUBCASE("length mismatch") {
    const std::vector<std::optional<BBox>> p{inside};
    const std::vector<BBox> g{gt, gt};
    CHECK_THROWS_AS(center_rule_pr(p, g), std::invalid_argument);
  }
}

TEST_CASE("center rule is invariant under reordering") {
  std::mt19937_64 rng(3);
  std::vector<std::optional<BBox>> p;
  std::vector<BBox> g;
  std::bernoulli_distribution missing(0.2);
  for (int i = 0; i < 200; ++i) {
    g.push_back(random_box(rng));
    p.push_back(missing(rng) ? std::nullopt : std::optional<BBox>(random_box(rng)));
  }
  const PrecisionRecall base = center_rule_pr(p, g);
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::optional<BBox>> p2;
    std::vector<BBox> g2;
    for (std::size_t i : order) p2.push_back(p[i]), g2.push_back(g[i]);
    const PrecisionRecall r = center_rule_pr(p2, g2);
    CHECK(r.precision == base.precision);
    CHECK(r.recall == base.recall);
  }
}

TEST_CASE("classification metrics") {
  SUBCASE("all correct") {
    const std::vector<int> t{1, 0, 1}, p{1, 0, 1};
    const ClassificationMetrics m = cls_metrics(p, t);
    CHECK(m.accuracy == 1.0);
    CHECK(m.specificity == 1.0);
    CHECK(m.sensitivity == 1.0);
  }
  SUBCASE("hand count") {
    const std::vector<int> t{1, 0, 1, 0}, p{1, 0, 0, 0};
    const ClassificationMetrics m = cls_metrics(p, t);
    CHECK(m.accuracy == 0.75);
    CHECK(m.specificity == 1.0);
    CHECK(m.sensitivity == 0.5);
  }
  SUBCASE("empty positive class") {
    const std::vector<int> t{0, 0}, p{0, 0};
    const ClassificationMetrics m = cls_metrics(p, t);
    CHECK(m.sensitivity == 1.0);
    CHECK(m.sensitivity_undefined);
    CHECK_FALSE(m.specificity_undefined);
  }
  SUBCASE("errors") {
    const std::vector<int> none, one{1}, two{1, 0}, bad{2};
    CHECK_THROWS_AS(cls_metrics(none, none), std::invalid_argument);
    CHECK_THROWS_AS(cls_metrics(one, two), std::invalid_argument);
    CHECK_THROWS_AS(cls_metrics(bad, one), std::invalid_argument);
  }
}

TEST_CASE("report mIoU is the mean of per-sample IoUs") {
  std::mt19937_64 rng(9);
  std::vector<std::optional<BBox>> p;
  std::vector<BBox> g;
  for (int i = 0; i < 50; ++i) p.push_back(random_box(rng)), g.push_back(random_box(rng));
  const std::vector<int> labels(50, 1);
  const MetricsReport r = make_report(p, g, labels, labels);
  REQUIRE(r.per_sample_iou.size() == 50);
  Scalar mean = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(r.per_sample_iou[i] == iou(*p[i], g[i]));
    mean += r.per_sample_iou[i];
  }
  CHECK(std::abs(r.miou - mean / 50) < 1e-12);
}

TEST_CASE("detect head") {
  ParameterSet ps(1);
  DetectHeadParams h = make_detect_head(ps, 8, 6, 0);
  const MultiScaleTokens sp = scale_layout(32).with_data(random_tensor({21, 8}, 2));
  SUBCASE("zero weights give the logistic of zero") {
    for (Parameter& p : ps.entries()) p.value.mutable_data().setZero();
    const Tensor out = detect_head(sp, h);
    for (Index i = 0; i < 4; ++i) CHECK(out[i] == 0.5);
  }
  SUBCASE("outputs stay a valid box") {
    for (Parameter& p : ps.entries()) p.value.mutable_data() = random_tensor(p.value.shape(), 3, false, 5.0).data();
    const Tensor out = detect_head(sp, h);
    // The squash can round to 1 in floating point, never to 0 at these scales.
    const BBox b = to_box(out);
    CHECK((b.cx >= 0 && b.cx <= 1 && b.cy >= 0 && b.cy <= 1));
    CHECK((b.w > 0 && b.w <= 1 && b.h > 0 && b.h <= 1));
  }
  SUBCASE("gradients match finite differences") {
    std::vector<Tensor> leaves{random_tensor({21, 8}, 2, true)};
    const MultiScaleTokens leaf_sp = sp.with_data(leaves[0]);
    for (const Parameter& p : ps.entries()) leaves.push_back(p.value);
    CHECK(test::max_op_grad_error([&] { return detect_head(leaf_sp, h); }, leaves, 4) < 1e-6);
  }
}

TEST_CASE("box loss") {
  const BBox gt{0.4, 0.5, 0.3, 0.2};
  auto pred = [](const BBox& b, bool grad = false) { return Tensor::from({1, 4}, {b.cx, b.cy, b.w, b.h}, grad); };
  CHECK(box_loss(pred(gt), gt).item() == 0.0);
  const BBox far{0.9, 0.9, 0.1, 0.1};
  CHECK(box_loss(pred(far), gt).item() == doctest::Approx(0.5 + 0.4 + 0.2 + 0.1 + 1.0).epsilon(1e-15));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const BBox a = random_box(rng), b = random_box(rng);
    const Scalar direct = std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) +
                          std::abs(a.h - b.h) + 1.0 - iou(a, b);
    CHECK(std::abs(box_loss(pred(a), b).item() - direct) < 1e-12);
    CHECK(box_loss_value(a, b) == box_loss(pred(a), b).item());
  }
  for (int trial = 0; trial < 20; ++trial) {
    // Overlapping boxes away from ties in every coordinate.
    std::uniform_real_distribution<Scalar> shift(0.01, 0.05);
    const BBox b{0.5, 0.5, 0.3, 0.4};
    const BBox a{b.cx + shift(rng), b.cy - shift(rng), b.w * (1 + 2 * shift(rng)), b.h * (1 - 2 * shift(rng))};
    const Tensor p = pred(a, true);
    CHECK(finite_difference_check([&] { return box_loss(p, b); }, {p}, {}, 1e-7).worst < 1e-5);
  }
}

TEST_CASE("layer decay learning rates") {
  const std::vector<Scalar> expected{1.6479e-5, 2.5351e-5, 3.9e-5, 6e-5};
  for (int k = 0; k < 4; ++k) {
    CHECK(layer_decay_lr(6e-5, k, 4, 0.65) == doctest::Approx(expected[k]).epsilon(1e-4));
    CHECK(layer_decay_lr(6e-5, k, 4, 0.65) == doctest::Approx(6e-5 * std::pow(0.65, 3 - k)).epsilon(1e-14));
    CHECK(layer_decay_lr(6e-5, k, 4, 1.0) == 6e-5);
  }
  CHECK(layer_decay_lr(6e-5, 0, 1, 0.65) == 6e-5);
  CHECK_THROWS_AS(layer_decay_lr(6e-5, 0, 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(layer_decay_lr(6e-5, 0, 4, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(layer_decay_lr(6e-5, 4, 4, 0.65), std::invalid_argument);
}

TEST_CASE("AdamW update") {
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  SUBCASE("hand recurrence") {
    Vector w = Vector::Constant(1, 1.0), g = Vector::Constant(1, 1.0), m = Vector::Zero(1), v = Vector::Zero(1);
    adamw_update(w, g, m, v, 1, 0.1, cfg);
    CHECK(m[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(v[0] == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(w[0] == doctest::Approx(1 - 0.1 / (1 + 1e-8)).epsilon(1e-14));
    CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-7));
  }
  SUBCASE("zero gradient without decay leaves the weight unchanged") {
    Vector w = Vector::Constant(3, 0.7), g = Vector::Zero(3), m = Vector::Zero(3), v = Vector::Zero(3);
    adamw_update(w, g, m, v, 1, 0.1, cfg);
    CHECK(w == Vector::Constant(3, 0.7));
  }
  SUBCASE("zero gradient with decay is pure decay") {
    cfg.weight_decay = 0.1;
    Vector w = Vector::Constant(1, 2.0), g = Vector::Zero(1), m = Vector::Zero(1), v = Vector::Zero(1);
    adamw_update(w, g, m, v, 1, 0.01, cfg);
    CHECK(w[0] == doctest::Approx(2.0 * (1 - 0.01 * 0.1)).epsilon(1e-15));
  }
  SUBCASE("minimizes a one-dimensional quadratic") {
    Vector w = Vector::Constant(1, 1.0), m = Vector::Zero(1), v = Vector::Zero(1);
    std::vector<Scalar> trace;
    for (long t = 1; t <= 400; ++t) {
      const Vector g = 2 * w;
      adamw_update(w, g, m, v, t, 0.01, cfg);
      trace.push_back(std::abs(w[0]));
    }
    for (std::size_t i = 10; i < 90; ++i) CHECK(trace[i] < trace[i - 1]);
    CHECK(trace.back() < 0.05);
  }
}

TEST_CASE("AdamW only tracks trainable parameters and rejects non-finite gradients") {
  ParameterSet ps(1);
  const Tensor a = ps.add("a", {3}, Init::ones(), true, 0);
  const Tensor b = ps.add("b", {2}, Init::ones(), false, 0);
  AdamWConfig cfg;
  cfg.num_groups = 1;
  AdamW opt(ps, cfg);
  CHECK(opt.num_states() == 1);
  GradientMap g;
  g.add(a, Vector::Constant(3, 1.0));
  g.add(b, Vector::Constant(2, 1.0));
  opt.step(g);
  CHECK(a[0] < 1.0);
  CHECK(b.data() == Vector::Constant(2, 1.0));

  const Vector before = a.data();
  GradientMap bad;
  bad.add(a, Vector::Constant(3, std::nan("")));
  CHECK_THROWS_AS(opt.step(bad), NumericalError);
  CHECK(a.data() == before);
  CHECK(opt.steps() == 1);
}

TEST_CASE("layer-decay groups reach the optimizer") {
  ParameterSet ps(1);
  ps.add("early", {1}, Init::ones(), true, 0);
  ps.add("late", {1}, Init::ones(), true, 3);
  AdamWConfig cfg;
  cfg.num_groups = 4;
  AdamW opt(ps, cfg);
  CHECK(opt.group_lr(0) == doctest::Approx(1.6479e-5).epsilon(1e-4));
  CHECK(opt.group_lr(3) == 6e-5);
}
