#pragma once

#include "lqa/parameters.hpp"
#include "lqa/tensor.hpp"

#include <string>

namespace lqa {

/// Affine map on the feature axis: x[N x in] * weight[in x out] + bias[out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Index in_features() const { return weight.dim(0); }
  Index out_features() const { return weight.dim(1); }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

/// Multi-head projections; head_dim = dim / heads sets the 1/sqrt(d_k) scale.
struct AttentionParams {
  Linear query, key, value, output;
  Index heads = 1;

  Index dim() const { return query.in_features(); }
  Index head_dim() const { return dim() / heads; }
};

/// Two-layer GELU MLP applied row by row.
struct FFNParams {
  Linear fc1, fc2;
};

inline constexpr Scalar kLayerNormEps = 1e-6;

Linear make_linear(ParameterSet& params, const std::string& name, Index in, Index out, bool trainable,
                   int group = 0);
LayerNormParams make_layer_norm(ParameterSet& params, const std::string& name, Index dim, bool trainable,
                                int group = 0);
AttentionParams make_attention(ParameterSet& params, const std::string& name, Index dim, Index heads,
                               bool trainable, int group = 0);
FFNParams make_ffn(ParameterSet& params, const std::string& name, Index dim, Index hidden, bool trainable,
                   int group = 0);

Tensor linear(const Tensor& x, const Linear& p);
Tensor layer_norm(const Tensor& x, const LayerNormParams& p);

/// Softmax(Q K^T / sqrt(d_k)) V per head with Q from `q_src` and K, V from
/// `kv_src`; heads are concatenated and projected by the output weights.
Tensor cross_attention(const Tensor& q_src, const Tensor& kv_src, const AttentionParams& p);
Tensor self_attention(const Tensor& x, const AttentionParams& p);

Tensor ffn(const Tensor& x, const FFNParams& p);

/// residual + gate * branch with a per-channel gate. A zero gate returns the
/// residual values exactly.
Tensor gated_residual(const Tensor& residual, const Tensor& branch, const Tensor& gate);

}  // namespace lqa
