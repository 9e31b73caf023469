#pragma once

#include "lqa/attention.hpp"
#include "lqa/parameters.hpp"
#include "lqa/tensor.hpp"

#include <vector>

namespace lqa {

struct BackboneConfig {
  Index image_size = 64;
  Index patch_size = 16;
  Index dim = 32;
  Index depth = 8;
  Index stages = 4;
  Index heads = 4;
  Index ffn_ratio = 4;

  Index grid() const { return image_size / patch_size; }
  Index num_tokens() const { return grid() * grid(); }
  Index layers_per_stage() const { return depth / stages; }
  void validate() const;
};

/// Fixed 2D sine-cosine table [grid^2 x dim]: the first half of the channels
/// encodes the column, the second half the row.
Tensor sincos_position_table(Index grid, Index dim);

/// Pre-norm transformer encoder layer.
struct EncoderLayer {
  LayerNormParams attn_norm;
  AttentionParams attn;
  LayerNormParams ffn_norm;
  FFNParams ffn;
};

Tensor encoder_layer(const Tensor& tokens, const EncoderLayer& layer);

/// Randomly initialized ViT whose parameters are all registered frozen.
/// Frozen weights are constants on the tape, so gradients still reach the
/// stage inputs.
class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParameterSet& params);

  const BackboneConfig& config() const { return config_; }

  /// [1 x H x W] image -> [T x D] tokens with positional embedding.
  Tensor patch_embed(const Tensor& image) const;
  /// Applies layers [stage * L/N, (stage + 1) * L/N).
  Tensor run_stage(const Tensor& tokens, Index stage) const;
  /// Reference path: patch embedding followed by every layer in order.
  Tensor encode(const Tensor& image) const;

  const std::vector<EncoderLayer>& layers() const { return layers_; }

 private:
  BackboneConfig config_;
  Tensor patch_kernel_;
  Tensor patch_bias_;
  Tensor pos_embed_;
  std::vector<EncoderLayer> layers_;
};

}  // namespace lqa
