#include "lqa/attention.hpp"

#include <cmath>
#include <vector>

namespace lqa {

Linear make_linear(ParameterSet& params, const std::string& name, Index in, Index out, bool trainable,
                   int group) {
  return {params.add(name + ".weight", {in, out}, Init::xavier(in, out), trainable, group),
          params.add(name + ".bias", {out}, Init::zeros(), trainable, group)};
}

LayerNormParams make_layer_norm(ParameterSet& params, const std::string& name, Index dim, bool trainable,
                                int group) {
  return {params.add(name + ".gain", {dim}, Init::ones(), trainable, group),
          params.add(name + ".bias", {dim}, Init::zeros(), trainable, group)};
}

AttentionParams make_attention(ParameterSet& params, const std::string& name, Index dim, Index heads,
                               bool trainable, int group) {
  if (heads <= 0 || dim % heads != 0)
    throw ShapeError("attention: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                     " heads");
  AttentionParams p;
  p.query = make_linear(params, name + ".query", dim, dim, trainable, group);
  p.key = make_linear(params, name + ".key", dim, dim, trainable, group);
  p.value = make_linear(params, name + ".value", dim, dim, trainable, group);
  p.output = make_linear(params, name + ".output", dim, dim, trainable, group);
  p.heads = heads;
  return p;
}

FFNParams make_ffn(ParameterSet& params, const std::string& name, Index dim, Index hidden, bool trainable,
                   int group) {
  return {make_linear(params, name + ".fc1", dim, hidden, trainable, group),
          make_linear(params, name + ".fc2", hidden, dim, trainable, group)};
}

Tensor linear(const Tensor& x, const Linear& p) { return add_rowwise(matmul(x, p.weight), p.bias); }

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
  return layer_norm(x, p.gain, p.bias, kLayerNormEps);
}

Tensor cross_attention(const Tensor& q_src, const Tensor& kv_src, const AttentionParams& p) {
  if (q_src.rank() != 2 || kv_src.rank() != 2)
    throw ShapeError("cross_attention: expected token matrices, got " + to_string(q_src.shape()) + " and " +
                     to_string(kv_src.shape()));
  const Index dim = p.dim();
  if (q_src.dim(1) != dim || kv_src.dim(1) != dim)
    throw ShapeError("cross_attention: feature dim mismatch " + to_string(q_src.shape()) + " vs " +
                     to_string(kv_src.shape()) + " for D=" + std::to_string(dim));
  if (kv_src.dim(0) == 0) throw ShapeError("cross_attention: no keys");

  const Tensor q = linear(q_src, p.query);
  const Tensor k = linear(kv_src, p.key);
  const Tensor v = linear(kv_src, p.value);
  const Index dk = p.head_dim();
  const Scalar inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Scalar>(dk));

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(p.heads));
  for (Index h = 0; h < p.heads; ++h) {
    const Tensor qh = p.heads == 1 ? q : slice_cols(q, h * dk, dk);
    const Tensor kh = p.heads == 1 ? k : slice_cols(k, h * dk, dk);
    const Tensor vh = p.heads == 1 ? v : slice_cols(v, h * dk, dk);
    const Tensor weights = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_sqrt_dk));
    heads.push_back(matmul(weights, vh));
  }
  const Tensor merged = p.heads == 1 ? heads.front() : concat_cols(heads);
  return linear(merged, p.output);
}

Tensor self_attention(const Tensor& x, const AttentionParams& p) { return cross_attention(x, x, p); }

Tensor ffn(const Tensor& x, const FFNParams& p) { return linear(gelu(linear(x, p.fc1)), p.fc2); }

Tensor gated_residual(const Tensor& residual, const Tensor& branch, const Tensor& gate) {
  return add(residual, mul_rowwise(branch, gate));
}

}  // namespace lqa
