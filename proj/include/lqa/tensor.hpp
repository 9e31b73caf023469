#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace lqa {

using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using Shape = std::vector<Index>;

std::string to_string(const Shape& shape);
Index num_elements(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tape;
struct BackwardFn;

namespace detail {
struct Node {
  Shape shape;
  Vector value;
  bool requires_grad = false;
  // Slot in the recording tape; -1 for leaves.
  Index tape_slot = -1;
  const Tape* tape = nullptr;
};
}  // namespace detail

/// Dense row-major float64 array. Copies share storage; values are treated
/// as immutable once an op has produced them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, Scalar value);
  static Tensor from(Shape shape, Vector data, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<Scalar> data, bool requires_grad = false);
  static Tensor scalar(Scalar value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  Index size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->tape_slot < 0; }

  const Vector& data() const { return node_->value; }
  Scalar operator[](Index i) const { return node_->value[i]; }
  Scalar item() const;

  /// Rank-2 view; higher ranks fold trailing dimensions into columns.
  ConstMatrixMap matrix() const;
  Index rows() const;
  Index cols() const;

  /// In-place access for leaves only (optimizer updates, checkpoint loads).
  Vector& mutable_data();
  void set_requires_grad(bool flag);

  const detail::Node* id() const { return node_.get(); }

 private:
  friend class Tape;
  friend Tensor record_op(Shape, Vector, std::vector<Tensor>, BackwardFn);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Gradients of leaf tensors produced by Tape::backward.
class GradientMap {
 public:
  /// nullptr when the leaf does not require grad or was not reached.
  const Vector* find(const Tensor& leaf) const;
  /// Gradient shaped like `leaf`; zeros when the leaf was not reached.
  Vector at(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const { return find(leaf) != nullptr; }
  std::size_t size() const { return grads_.size(); }

  /// Adds `grad` into the slot of `leaf`.
  void add(const Tensor& leaf, const Vector& grad);
  void accumulate(const GradientMap& other);
  void scale(Scalar factor);

 private:
  friend class Tape;
  std::unordered_map<const detail::Node*, Vector> grads_;
};

/// Gradient callback: receives the output gradient and one slot per input;
/// slots for inputs that do not require grad are nullptr. Callbacks add into
/// the slots (never overwrite).
struct BackwardFn {
  std::function<void(const Vector& grad_out, std::span<Vector* const> grad_in)> fn;
};

/// Reverse-mode recording scope. Constructing a Tape makes it the active tape
/// on the calling thread; ops on requires_grad inputs are appended to it.
/// Without an active tape ops run in inference mode.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  std::size_t num_nodes() const { return entries_.size(); }

  /// Single use: a second call throws std::logic_error.
  GradientMap backward(const Tensor& loss);

 private:
  friend Tensor record_op(Shape, Vector, std::vector<Tensor>, BackwardFn);

  struct Entry {
    std::shared_ptr<detail::Node> output;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Builds an op result and records it on the active tape when any input
/// requires grad. Throws NumericalError on non-finite values.
Tensor record_op(Shape shape, Vector value, std::vector<Tensor> inputs, BackwardFn backward);

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar factor);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Per-row affine pieces on a [N x D] view: x + b and x * g with b, g of length D.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
Tensor mul_rowwise(const Tensor& x, const Tensor& gain);

// Per-channel bias for a [C x H x W] feature map.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = 1e-6);

Tensor conv2d(const Tensor& x, const Tensor& kernel, Index stride, Index pad);

// Token axis (rows) and feature axis (columns) of a [N x D] tensor.
Tensor slice_rows(const Tensor& x, Index begin, Index count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, Index begin, Index count);
Tensor concat_cols(std::span<const Tensor> parts);

/// Mean over rows: [N x D] -> [1 x D].
Tensor mean_rows(const Tensor& x);
Tensor sum(const Tensor& x);

// Operator sugar for the common elementwise ops.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }

}  // namespace lqa
