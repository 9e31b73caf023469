#include "lqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace lqa {

namespace {

thread_local Tape* g_active_tape = nullptr;

void require(bool condition, const std::string& message) {
  if (!condition) throw ShapeError(message);
}

void require_rank2(const Tensor& x, const char* op) {
  require(x.rank() == 2, std::string(op) + ": expected a rank-2 tensor, got " + to_string(x.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

MatrixMap as_matrix(Vector& v, Index rows, Index cols) { return MatrixMap(v.data(), rows, cols); }
ConstMatrixMap as_matrix(const Vector& v, Index rows, Index cols) {
  return ConstMatrixMap(v.data(), rows, cols);
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

Index num_elements(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, Vector data, bool requires_grad) {
  for (Index d : shape) require(d > 0, "tensor dimensions must be positive, got " + to_string(shape));
  require(num_elements(shape) == data.size(),
          "shape " + to_string(shape) + " does not match " + std::to_string(data.size()) + " values");
  if (!data.allFinite()) throw NumericalError("tensor created with non-finite values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::initializer_list<Scalar> data, bool requires_grad) {
  Vector v(static_cast<Index>(data.size()));
  std::copy(data.begin(), data.end(), v.data());
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = num_elements(shape);
  return from(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::constant(Shape shape, Scalar value) {
  const Index n = num_elements(shape);
  return from(std::move(shape), Vector::Constant(n, value));
}

Tensor Tensor::scalar(Scalar value) { return from({1}, {value}); }

Scalar Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

Index Tensor::rows() const { return rank() == 0 ? 1 : shape().front(); }
Index Tensor::cols() const { return rows() == 0 ? 0 : size() / rows(); }

ConstMatrixMap Tensor::matrix() const { return ConstMatrixMap(node_->value.data(), rows(), cols()); }

Vector& Tensor::mutable_data() {
  if (!is_leaf()) throw std::logic_error("mutable_data() is only available on leaf tensors");
  return node_->value;
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad() is only available on leaf tensors");
  node_->requires_grad = flag;
}

// ---------------------------------------------------------------------------
// GradientMap

const Vector* GradientMap::find(const Tensor& leaf) const {
  const auto it = grads_.find(leaf.id());
  return it == grads_.end() ? nullptr : &it->second;
}

Vector GradientMap::at(const Tensor& leaf) const {
  const Vector* g = find(leaf);
  return g ? *g : Vector::Zero(leaf.size());
}

void GradientMap::add(const Tensor& leaf, const Vector& grad) {
  if (grad.size() != leaf.size())
    throw ShapeError("gradient of size " + std::to_string(grad.size()) + " for tensor " + to_string(leaf.shape()));
  auto [it, inserted] = grads_.try_emplace(leaf.id(), grad);
  if (!inserted) it->second += grad;
}

void GradientMap::accumulate(const GradientMap& other) {
  for (const auto& [node, grad] : other.grads_) {
    auto [it, inserted] = grads_.try_emplace(node, grad);
    if (!inserted) it->second += grad;
  }
}

void GradientMap::scale(Scalar factor) {
  for (auto& entry : grads_) entry.second *= factor;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

Tensor record_op(Shape shape, Vector value, std::vector<Tensor> inputs, BackwardFn backward) {
  if (!value.allFinite()) throw NumericalError("non-finite value produced by tensor op");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);

  Tape* tape = Tape::active();
  if (tape == nullptr || tape->consumed_) return Tensor(std::move(node));

  bool any = false;
  for (const Tensor& in : inputs) {
    const detail::Node& n = *in.node_;
    if (n.requires_grad && (n.tape_slot < 0 || n.tape == tape)) any = true;
  }
  if (!any) return Tensor(std::move(node));

  node->requires_grad = true;
  node->tape = tape;
  node->tape_slot = static_cast<Index>(tape->entries_.size());
  Tape::Entry entry;
  entry.output = node;
  entry.inputs.reserve(inputs.size());
  for (Tensor& in : inputs) entry.inputs.push_back(std::move(in.node_));
  entry.backward = std::move(backward);
  tape->entries_.push_back(std::move(entry));
  return Tensor(std::move(node));
}

GradientMap Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::logic_error("backward() already called on this tape");
  if (loss.size() != 1) throw ShapeError("backward() requires a scalar loss, got " + to_string(loss.shape()));
  if (entries_.empty()) throw std::logic_error("backward() on an empty tape");
  consumed_ = true;

  GradientMap result;
  const detail::Node* root = loss.id();
  if (!root->requires_grad) return result;
  if (root->tape_slot < 0) {
    // A bare leaf used as the loss.
    result.grads_.emplace(root, Vector::Ones(1));
    return result;
  }
  if (root->tape != this) throw std::logic_error("loss was not recorded on this tape");

  std::vector<Vector> grads(entries_.size());
  grads[static_cast<std::size_t>(root->tape_slot)] = Vector::Ones(1);

  std::vector<Vector*> slots;
  for (std::size_t i = entries_.size(); i-- > 0;) {
    Entry& e = entries_[i];
    if (grads[i].size() == 0) continue;
    slots.assign(e.inputs.size(), nullptr);
    for (std::size_t j = 0; j < e.inputs.size(); ++j) {
      detail::Node& in = *e.inputs[j];
      if (!in.requires_grad) continue;
      Vector* slot = nullptr;
      if (in.tape_slot < 0) {
        auto [it, inserted] = result.grads_.try_emplace(&in);
        if (inserted) it->second = Vector::Zero(in.value.size());
        slot = &it->second;
      } else if (in.tape == this) {
        Vector& g = grads[static_cast<std::size_t>(in.tape_slot)];
        if (g.size() == 0) g = Vector::Zero(in.value.size());
        slot = &g;
      }
      slots[j] = slot;
    }
    e.backward.fn(grads[i], slots);
    grads[i] = Vector();
  }
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise ops

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return record_op(a.shape(), a.data() + b.data(), {a, b}, {[](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g;
                     if (gi[1]) *gi[1] += g;
                   }});
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return record_op(a.shape(), a.data() - b.data(), {a, b}, {[](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g;
                     if (gi[1]) *gi[1] -= g;
                   }});
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return record_op(a.shape(), a.data().cwiseProduct(b.data()), {a, b},
                   {[a, b](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g.cwiseProduct(b.data());
                     if (gi[1]) *gi[1] += g.cwiseProduct(a.data());
                   }});
}

Tensor scale(const Tensor& a, Scalar factor) {
  return record_op(a.shape(), a.data() * factor, {a}, {[factor](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g * factor;
                   }});
}

Tensor gelu(const Tensor& x) {
  constexpr Scalar inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const Vector& v = x.data();
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = 0.5 * v[i] * (1.0 + std::erf(v[i] * inv_sqrt2));
  return record_op(x.shape(), std::move(out), {x}, {[x](const Vector& g, std::span<Vector* const> gi) {
                     if (!gi[0]) return;
                     const Scalar inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
                     const Vector& v = x.data();
                     Vector& dx = *gi[0];
                     for (Index i = 0; i < v.size(); ++i) {
                       const Scalar cdf = 0.5 * (1.0 + std::erf(v[i] * inv_sqrt2));
                       const Scalar pdf = inv_sqrt_2pi * std::exp(-0.5 * v[i] * v[i]);
                       dx[i] += g[i] * (cdf + v[i] * pdf);
                     }
                   }});
}

Tensor sigmoid(const Tensor& x) {
  Vector out = x.data().unaryExpr([](Scalar v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  Vector saved = out;
  return record_op(x.shape(), std::move(out), {x},
                   {[y = std::move(saved)](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
                   }});
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  require(bias.size() == x.cols(), "add_rowwise: bias of length " + std::to_string(bias.size()) +
                                       " does not match feature dim of " + to_string(x.shape()));
  const Index rows = x.rows(), cols = x.cols();
  Vector out = x.data();
  as_matrix(out, rows, cols).rowwise() += bias.data().transpose();
  return record_op(x.shape(), std::move(out), {x, bias},
                   {[rows, cols](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g;
                     if (gi[1]) *gi[1] += as_matrix(g, rows, cols).colwise().sum().transpose();
                   }});
}

Tensor mul_rowwise(const Tensor& x, const Tensor& gain) {
  require(gain.size() == x.cols(), "mul_rowwise: gain of length " + std::to_string(gain.size()) +
                                       " does not match feature dim of " + to_string(x.shape()));
  const Index rows = x.rows(), cols = x.cols();
  Vector out(x.size());
  as_matrix(out, rows, cols) = x.matrix() * gain.data().asDiagonal();
  return record_op(x.shape(), std::move(out), {x, gain},
                   {[x, gain, rows, cols](const Vector& g, std::span<Vector* const> gi) {
                     const ConstMatrixMap gm = as_matrix(g, rows, cols);
                     if (gi[0]) as_matrix(*gi[0], rows, cols) += gm * gain.data().asDiagonal();
                     if (gi[1]) *gi[1] += gm.cwiseProduct(x.matrix()).colwise().sum().transpose();
                   }});
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require(x.rank() == 3 && bias.size() == x.dim(0),
          "add_channel_bias: expected [C x H x W] and bias of length C, got " + to_string(x.shape()) +
              " and " + to_string(bias.shape()));
  const Index channels = x.dim(0), plane = x.dim(1) * x.dim(2);
  Vector out = x.data();
  as_matrix(out, channels, plane).colwise() += bias.data();
  return record_op(x.shape(), std::move(out), {x, bias},
                   {[channels, plane](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g;
                     if (gi[1]) *gi[1] += as_matrix(g, channels, plane).rowwise().sum();
                   }});
}

// ---------------------------------------------------------------------------
// Linear algebra and layout

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Vector out(m * n);
  as_matrix(out, m, n).noalias() = a.matrix() * b.matrix();
  return record_op({m, n}, std::move(out), {a, b}, {[a, b, m, k, n](const Vector& g, std::span<Vector* const> gi) {
                     const ConstMatrixMap gm = as_matrix(g, m, n);
                     if (gi[0]) as_matrix(*gi[0], m, k).noalias() += gm * b.matrix().transpose();
                     if (gi[1]) as_matrix(*gi[1], k, n).noalias() += a.matrix().transpose() * gm;
                   }});
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const Index r = x.dim(0), c = x.dim(1);
  Vector out(x.size());
  as_matrix(out, c, r) = x.matrix().transpose();
  return record_op({c, r}, std::move(out), {x}, {[r, c](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) as_matrix(*gi[0], r, c) += as_matrix(g, c, r).transpose();
                   }});
}

Tensor reshape(const Tensor& x, Shape shape) {
  for (Index d : shape) require(d > 0, "reshape: non-positive dimension in " + to_string(shape));
  require(num_elements(shape) == x.size(),
          "reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  return record_op(std::move(shape), x.data(), {x}, {[](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) *gi[0] += g;
                   }});
}

Tensor softmax_lastdim(const Tensor& x) {
  require(x.rank() >= 1 && x.shape().back() >= 1, "softmax_lastdim: empty last dimension");
  const Index cols = x.shape().back(), rows = x.size() / cols;
  Vector out(x.size());
  MatrixMap y = as_matrix(out, rows, cols);
  const ConstMatrixMap in = as_matrix(x.data(), rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Scalar peak = in.row(r).maxCoeff();
    y.row(r) = (in.row(r).array() - peak).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Vector saved = out;
  return record_op(x.shape(), std::move(out), {x},
                   {[y = std::move(saved), rows, cols](const Vector& g, std::span<Vector* const> gi) {
                     if (!gi[0]) return;
                     const ConstMatrixMap ym = as_matrix(y, rows, cols);
                     const ConstMatrixMap gm = as_matrix(g, rows, cols);
                     const Eigen::VectorXd dots = gm.cwiseProduct(ym).rowwise().sum();
                     as_matrix(*gi[0], rows, cols).array() +=
                         ym.array() * (gm.array().colwise() - dots.array());
                   }});
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const Index cols = x.shape().back(), rows = x.size() / cols;
  require(gain.size() == cols && bias.size() == cols,
          "layer_norm: gain/bias must match last dimension of " + to_string(x.shape()));

  const ConstMatrixMap in = as_matrix(x.data(), rows, cols);
  RowMatrix normalized(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const Scalar mean = in.row(r).mean();
    normalized.row(r) = in.row(r).array() - mean;
    const Scalar var = normalized.row(r).squaredNorm() / static_cast<Scalar>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    normalized.row(r) *= inv_std[r];
  }
  Vector out(x.size());
  MatrixMap y = as_matrix(out, rows, cols);
  y = normalized * gain.data().asDiagonal();
  y.rowwise() += bias.data().transpose();

  return record_op(
      x.shape(), std::move(out), {x, gain, bias},
      {[xhat = std::move(normalized), inv_std = std::move(inv_std), gain, rows, cols](
           const Vector& g, std::span<Vector* const> gi) {
        const ConstMatrixMap gm = as_matrix(g, rows, cols);
        if (gi[1]) *gi[1] += gm.cwiseProduct(xhat).colwise().sum().transpose();
        if (gi[2]) *gi[2] += gm.colwise().sum().transpose();
        if (!gi[0]) return;
        MatrixMap dx = as_matrix(*gi[0], rows, cols);
        const Scalar n = static_cast<Scalar>(cols);
        for (Index r = 0; r < rows; ++r) {
          const Eigen::RowVectorXd dxhat = gm.row(r).cwiseProduct(gain.data().transpose());
          const Scalar mean_d = dxhat.sum() / n;
          const Scalar mean_dx = dxhat.dot(xhat.row(r)) / n;
          dx.row(r).array() += inv_std[r] * (dxhat.array() - mean_d - xhat.row(r).array() * mean_dx);
        }
      }});
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, Index stride, Index pad) {
  if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (pad < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
  require(x.rank() == 3 && kernel.rank() == 4 && kernel.dim(1) == x.dim(0) && kernel.dim(2) == kernel.dim(3),
          "conv2d: expected input [C x H x W] and kernel [C' x C x k x k], got " + to_string(x.shape()) +
              " and " + to_string(kernel.shape()));
  const Index in_c = x.dim(0), height = x.dim(1), width = x.dim(2);
  const Index out_c = kernel.dim(0), k = kernel.dim(2);
  require(height + 2 * pad >= k && width + 2 * pad >= k,
          "conv2d: kernel " + std::to_string(k) + " larger than padded input " + to_string(x.shape()));
  const Index out_h = (height + 2 * pad - k) / stride + 1;
  const Index out_w = (width + 2 * pad - k) / stride + 1;
  const Index patch = in_c * k * k, positions = out_h * out_w;

  // im2col: [C*k*k x H'*W'].
  auto columns = std::make_shared<RowMatrix>(RowMatrix::Zero(patch, positions));
  const Scalar* src = x.data().data();
  for (Index c = 0; c < in_c; ++c)
    for (Index ky = 0; ky < k; ++ky)
      for (Index kx = 0; kx < k; ++kx) {
        Scalar* row = columns->row((c * k + ky) * k + kx).data();
        for (Index oy = 0; oy < out_h; ++oy) {
          const Index iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= height) continue;
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= width) continue;
            row[oy * out_w + ox] = src[(c * height + iy) * width + ix];
          }
        }
      }

  Vector out(out_c * positions);
  as_matrix(out, out_c, positions).noalias() = as_matrix(kernel.data(), out_c, patch) * *columns;

  return record_op(
      {out_c, out_h, out_w}, std::move(out), {x, kernel},
      {[columns, kernel, in_c, height, width, out_c, k, stride, pad, out_h, out_w, patch, positions](
           const Vector& g, std::span<Vector* const> gi) {
        const ConstMatrixMap gm = as_matrix(g, out_c, positions);
        if (gi[1]) as_matrix(*gi[1], out_c, patch).noalias() += gm * columns->transpose();
        if (!gi[0]) return;
        const RowMatrix dcols = as_matrix(kernel.data(), out_c, patch).transpose() * gm;
        Scalar* dst = gi[0]->data();
        for (Index c = 0; c < in_c; ++c)
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
              const Scalar* row = dcols.row((c * k + ky) * k + kx).data();
              for (Index oy = 0; oy < out_h; ++oy) {
                const Index iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= height) continue;
                for (Index ox = 0; ox < out_w; ++ox) {
                  const Index ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= width) continue;
                  dst[(c * height + iy) * width + ix] += row[oy * out_w + ox];
                }
              }
            }
      }});
}

Tensor slice_rows(const Tensor& x, Index begin, Index count) {
  require_rank2(x, "slice_rows");
  require(begin >= 0 && count > 0 && begin + count <= x.dim(0),
          "slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") out of bounds for " + to_string(x.shape()));
  const Index cols = x.dim(1);
  Vector out = x.data().segment(begin * cols, count * cols);
  return record_op({count, cols}, std::move(out), {x},
                   {[begin, count, cols](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) gi[0]->segment(begin * cols, count * cols) += g;
                   }});
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    require(p.dim(1) == cols, "concat_rows: column mismatch " + to_string(p.shape()));
    rows += p.dim(0);
  }
  Vector out(rows * cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(at);
    out.segment(at, p.size()) = p.data();
    at += p.size();
  }
  std::vector<Index> sizes;
  for (const Tensor& p : parts) sizes.push_back(p.size());
  return record_op({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                   {[offsets, sizes](const Vector& g, std::span<Vector* const> gi) {
                     for (std::size_t i = 0; i < gi.size(); ++i)
                       if (gi[i]) *gi[i] += g.segment(offsets[i], sizes[i]);
                   }});
}

Tensor slice_cols(const Tensor& x, Index begin, Index count) {
  require_rank2(x, "slice_cols");
  require(begin >= 0 && count > 0 && begin + count <= x.dim(1),
          "slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") out of bounds for " + to_string(x.shape()));
  const Index rows = x.dim(0), cols = x.dim(1);
  Vector out(rows * count);
  as_matrix(out, rows, count) = x.matrix().middleCols(begin, count);
  return record_op({rows, count}, std::move(out), {x},
                   {[begin, rows, cols, count](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) as_matrix(*gi[0], rows, cols).middleCols(begin, count) += as_matrix(g, rows, count);
                   }});
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_cols");
    require(p.dim(0) == rows, "concat_cols: row mismatch " + to_string(p.shape()));
    cols += p.dim(1);
  }
  Vector out(rows * cols);
  MatrixMap om = as_matrix(out, rows, cols);
  std::vector<Index> starts, widths;
  Index at = 0;
  for (const Tensor& p : parts) {
    om.middleCols(at, p.dim(1)) = p.matrix();
    starts.push_back(at);
    widths.push_back(p.dim(1));
    at += p.dim(1);
  }
  return record_op({rows, cols}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                   {[starts, widths, rows, cols](const Vector& g, std::span<Vector* const> gi) {
                     const ConstMatrixMap gm = as_matrix(g, rows, cols);
                     for (std::size_t i = 0; i < gi.size(); ++i)
                       if (gi[i]) as_matrix(*gi[i], rows, widths[i]) += gm.middleCols(starts[i], widths[i]);
                   }});
}

Tensor mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  const Index rows = x.dim(0), cols = x.dim(1);
  Vector out = x.matrix().colwise().mean().transpose();
  return record_op({1, cols}, std::move(out), {x}, {[rows, cols](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0])
                       as_matrix(*gi[0], rows, cols).rowwise() += g.transpose() / static_cast<Scalar>(rows);
                   }});
}

Tensor sum(const Tensor& x) {
  Vector out(1);
  out[0] = x.data().sum();
  return record_op({1}, std::move(out), {x}, {[](const Vector& g, std::span<Vector* const> gi) {
                     if (gi[0]) gi[0]->array() += g[0];
                   }});
}

}  // namespace lqa
