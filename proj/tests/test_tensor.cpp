#include "lqa/tensor.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

using namespace lqa;
using lqa::test::max_op_grad_error;
using lqa::test::random_tensor;

namespace {

// Direct sliding-window reference.
RowMatrix naive_conv(const Tensor& x, const Tensor& k, Index stride, Index pad, Index& oh, Index& ow) {
  const Index c = x.dim(0), h = x.dim(1), w = x.dim(2), oc = k.dim(0), ks = k.dim(2);
  oh = (h + 2 * pad - ks) / stride + 1;
  ow = (w + 2 * pad - ks) / stride + 1;
  RowMatrix out = RowMatrix::Zero(oc, oh * ow);
  for (Index o = 0; o < oc; ++o)
    for (Index y = 0; y < oh; ++y)
      for (Index xx = 0; xx < ow; ++xx) {
        Scalar acc = 0;
        for (Index ci = 0; ci < c; ++ci)
          for (Index ky = 0; ky < ks; ++ky)
            for (Index kx = 0; kx < ks; ++kx) {
              const Index iy = y * stride + ky - pad, ix = xx * stride + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += x.data()[(ci * h + iy) * w + ix] * k.data()[((o * c + ci) * ks + ky) * ks + kx];
            }
        out(o, y * ow + xx) = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("matmul") {
  SUBCASE("identity") {
    const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    const Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
    CHECK(matmul(eye, b).data() == b.data());
  }
  SUBCASE("zero") {
    const Tensor out = matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {0, 0}));
    CHECK(out.shape() == Shape{1, 1});
    CHECK(out.item() == 0.0);
  }
  SUBCASE("gradient matches central differences") {
    const Tensor a = random_tensor({3, 4}, 1, true), b = random_tensor({4, 2}, 2, true);
    CHECK(max_op_grad_error([&] { return matmul(a, b); }, {a, b}, 3) < 1e-6);
  }
  SUBCASE("shape mismatch names both shapes") {
    try {
      matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax_lastdim") {
  CHECK(softmax_lastdim(Tensor::from({3}, {0, 0, 0})).data().isApprox(Vector::Constant(3, 1.0 / 3.0), 1e-15));
  const Tensor big = softmax_lastdim(Tensor::from({2}, {1000, 1000}));
  CHECK(big[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(big[1] == doctest::Approx(0.5).epsilon(1e-15));

  // Direct exp/sum evaluation.
  const Tensor y = softmax_lastdim(Tensor::from({3}, {1, 2, 3}));
  const Scalar z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (Index i = 0; i < 3; ++i) CHECK(std::abs(y[i] - std::exp(static_cast<Scalar>(i + 1)) / z) < 1e-12);

  SUBCASE("rows sum to one and are shift invariant") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor x = random_tensor({5, 7}, seed, false, 3.0);
      const Tensor s = softmax_lastdim(x);
      const auto sums = s.matrix().rowwise().sum();
      for (Index r = 0; r < 5; ++r) CHECK(std::abs(sums(r) - 1.0) < 1e-12);
      const Tensor shifted = softmax_lastdim(add(x, Tensor::constant({5, 7}, 42.5)));
      CHECK((shifted.data() - s.data()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("layer_norm") {
  const Tensor ones = Tensor::constant({3}, 1.0), zeros = Tensor::zeros({3});
  CHECK(layer_norm(Tensor::from({3}, {1, 1, 1}), ones, zeros).data() == Vector::Zero(3));
  const Tensor bias = Tensor::from({3}, {0.5, -1, 2});
  CHECK(layer_norm(Tensor::zeros({3}), ones, bias).data() == bias.data());

  SUBCASE("normalized rows") {
    const Tensor y = layer_norm(random_tensor({4, 8}, 9, false, 2.0), Tensor::constant({8}, 1.0), Tensor::zeros({8}));
    for (Index r = 0; r < 4; ++r) {
      CHECK(std::abs(y.matrix().row(r).mean()) < 1e-12);
      CHECK(y.matrix().row(r).squaredNorm() / 8.0 == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  SUBCASE("gradient") {
    const Tensor x = random_tensor({4, 8}, 4, true), g = random_tensor({8}, 5, true), b = random_tensor({8}, 6, true);
    CHECK(max_op_grad_error([&] { return layer_norm(x, g, b); }, {x, g, b}, 7) < 1e-5);
  }
  SUBCASE("gradient through an all-zero row stays finite") {
    const Tensor x = Tensor::zeros({2, 4}, true), g = random_tensor({4}, 1, true), b = random_tensor({4}, 2, true);
    CHECK(max_op_grad_error([&] { return layer_norm(x, g, b); }, {x, g, b}, 3) < 1e-4);
  }
  CHECK_THROWS_AS(layer_norm(zeros, ones, zeros, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(layer_norm(Tensor::zeros({2, 4}), ones, zeros), ShapeError);
}

TEST_CASE("conv2d") {
  SUBCASE("identity kernel") {
    const Tensor x = random_tensor({1, 4, 4}, 1);
    CHECK(conv2d(x, Tensor::from({1, 1, 1, 1}, {1}), 1, 0).data() == x.data());
  }
  SUBCASE("box filter sums windows") {
    const Tensor y = conv2d(Tensor::constant({1, 4, 4}, 1.0), Tensor::constant({1, 1, 2, 2}, 1.0), 2, 0);
    CHECK(y.shape() == Shape{1, 2, 2});
    CHECK(y.data() == Vector::Constant(4, 4.0));
  }
  SUBCASE("matches sliding-window reference") {
    for (auto [stride, pad] : {std::pair<Index, Index>{1, 0}, {1, 1}, {2, 1}, {3, 2}}) {
      const Tensor x = random_tensor({2, 7, 6}, 11), k = random_tensor({3, 2, 3, 3}, 12);
      Index oh = 0, ow = 0;
      const RowMatrix ref = naive_conv(x, k, stride, pad, oh, ow);
      const Tensor y = conv2d(x, k, stride, pad);
      CHECK(y.shape() == Shape{3, oh, ow});
      CHECK((y.matrix() - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("gradient") {
    const Tensor x = random_tensor({2, 6, 6}, 13, true), k = random_tensor({3, 2, 3, 3}, 14, true);
    CHECK(max_op_grad_error([&] { return conv2d(x, k, 1, 1); }, {x, k}, 15) < 1e-5);
    CHECK(max_op_grad_error([&] { return conv2d(x, k, 2, 1); }, {x, k}, 16) < 1e-5);
  }
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), 1, 1), ShapeError);
}

TEST_CASE("backward") {
  SUBCASE("quadratic") {
    const Tensor w = Tensor::from({2}, {1, 2}, true);
    Tape tape;
    const GradientMap g = tape.backward(sum(mul(w, w)));
    CHECK(g.at(w) == (Vector(2) << 2, 4).finished());
  }
  SUBCASE("loss independent of w") {
    const Tensor w = Tensor::from({2}, {1, 2}, true), u = Tensor::from({2}, {3, 4}, true);
    Tape tape;
    const GradientMap g = tape.backward(sum(mul(u, u)));
    CHECK(g.find(w) == nullptr);
    CHECK(g.at(w) == Vector::Zero(2));
  }
  SUBCASE("frozen leaves hold no gradient") {
    const Tensor w = Tensor::from({2}, {1, 2}, true), frozen = Tensor::from({2}, {3, 4}, false);
    Tape tape;
    const GradientMap g = tape.backward(sum(mul(w, frozen)));
    CHECK(g.find(frozen) == nullptr);
    CHECK(g.at(w) == frozen.data());
  }
  SUBCASE("single use") {
    const Tensor w = Tensor::from({2}, {1, 2}, true);
    Tape tape;
    const Tensor loss = sum(mul(w, w));
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
  }
  SUBCASE("non-scalar loss") {
    const Tensor w = Tensor::from({2}, {1, 2}, true);
    Tape tape;
    CHECK_THROWS_AS(tape.backward(mul(w, w)), ShapeError);
  }
  SUBCASE("empty tape") {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), std::logic_error);
  }
  SUBCASE("nodes are visited in reverse append order") {
    const Tensor w = Tensor::from({1}, {3}, true);
    Tape tape;
    const Tensor a = scale(w, 2.0);
    const Tensor b = mul(a, a);
    const Tensor c = add(b, a);
    CHECK(tape.num_nodes() == 3);
    CHECK(tape.backward(sum(c)).at(w)[0] == doctest::Approx(2 * (2 * 6.0 + 1)));
  }
  SUBCASE("no tape means no recording") {
    const Tensor w = Tensor::from({2}, {1, 2}, true);
    const Tensor y = mul(w, w);
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("a leaf used in two branches receives the sum of branch gradients") {
  const Tensor w = random_tensor({3, 3}, 21, true);
  const Tensor m = random_tensor({3, 3}, 22);
  auto branch_a = [&] { return sum(mul(gelu(w), m)); };
  auto branch_b = [&] { return sum(mul(softmax_lastdim(matmul(w, m)), m)); };
  Vector ga, gb, gboth;
  {
    Tape t;
    ga = t.backward(branch_a()).at(w);
  }
  {
    Tape t;
    gb = t.backward(branch_b()).at(w);
  }
  {
    Tape t;
    gboth = t.backward(add(branch_a(), branch_b())).at(w);
  }
  CHECK((gboth - (ga + gb)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("every differentiable op passes central differences at 10 random points") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const Tensor a = random_tensor({3, 4}, seed, true), b = random_tensor({3, 4}, seed + 50, true);
    const Tensor row = random_tensor({4}, seed + 70, true);
    const Tensor fmap = random_tensor({2, 3, 3}, seed + 80, true), cb = random_tensor({2}, seed + 90, true);
    CHECK(max_op_grad_error([&] { return add(a, b); }, {a, b}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return sub(a, b); }, {a, b}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return mul(a, b); }, {a, b}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return scale(a, -1.7); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return gelu(a); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return sigmoid(a); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return softmax_lastdim(a); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return add_rowwise(a, row); }, {a, row}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return mul_rowwise(a, row); }, {a, row}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return add_channel_bias(fmap, cb); }, {fmap, cb}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return transpose(a); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return reshape(a, {2, 6}); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return slice_rows(a, 1, 2); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return slice_cols(a, 1, 2); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return mean_rows(a); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error([&] { return sum(a); }, {a}, seed) < 1e-4);
    CHECK(max_op_grad_error(
              [&] {
                const std::vector<Tensor> parts{a, b};
                return concat_rows(parts);
              },
              {a, b}, seed) < 1e-4);
    CHECK(max_op_grad_error(
              [&] {
                const std::vector<Tensor> parts{a, slice_cols(b, 0, 2)};
                return concat_cols(parts);
              },
              {a, b}, seed) < 1e-4);
  }
}

TEST_CASE("reshape and transpose round-trip exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = random_tensor({3 + static_cast<Index>(seed % 4), 5}, seed);
    CHECK(transpose(transpose(x)).data() == x.data());
    CHECK(reshape(reshape(x, {x.size()}), x.shape()).data() == x.data());
  }
}

TEST_CASE("slice and concat along tokens invert each other") {
  const Tensor x = random_tensor({7, 3}, 31);
  const std::vector<Tensor> parts{slice_rows(x, 0, 2), slice_rows(x, 2, 4), slice_rows(x, 6, 1)};
  CHECK(concat_rows(parts).data() == x.data());
  CHECK_THROWS_AS(slice_rows(x, 5, 3), ShapeError);
}

TEST_CASE("non-finite values are an error state") {
  CHECK_THROWS_AS(scale(Tensor::from({1}, {1e308}), 10.0), NumericalError);
  Vector nan(1);
  nan[0] = std::nan("");
  CHECK_THROWS_AS(Tensor::from({1}, nan), NumericalError);
}

TEST_CASE("broadcasting beyond per-row affine is rejected") {
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3})), ShapeError);
  CHECK_THROWS_AS(add_rowwise(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}
