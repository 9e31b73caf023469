#pragma once

#include "lqa/attention.hpp"
#include "lqa/parameters.hpp"
#include "lqa/tensor.hpp"

#include <array>

namespace lqa {

inline constexpr std::size_t kNumScales = 3;
/// Downsampling factors of the three prior scales, finest first.
inline constexpr std::array<Index, kNumScales> kScaleStrides{8, 16, 32};

struct ScaleDims {
  Index height = 0;
  Index width = 0;
  Index tokens() const { return height * width; }
  bool operator==(const ScaleDims&) const = default;
};

/// Flattened 1/8, 1/16 and 1/32 maps stacked along the token axis in that
/// order, each map flattened row-major.
struct MultiScaleTokens {
  Tensor data;  // [S x D]
  std::array<Index, kNumScales> offsets{};
  std::array<ScaleDims, kNumScales> dims{};

  Index num_tokens() const { return data.dim(0); }
  Index dim() const { return data.dim(1); }
  Tensor scale(std::size_t i) const;
  /// Same layout, new values.
  MultiScaleTokens with_data(Tensor values) const;
  void validate() const;
};

/// Layout of the three scales for an image_size x image_size input.
MultiScaleTokens scale_layout(Index image_size);
Index multiscale_token_count(Index height, Index width);

/// maps: three [D x h x w] tensors, finest first.
MultiScaleTokens flatten_scales(std::span<const Tensor, kNumScales> maps);
std::array<Tensor, kNumScales> split_scales(const MultiScaleTokens& tokens);

struct ConvParams {
  Tensor kernel;  // [C' x C x k x k]
  Tensor bias;    // [C']
  Index stride = 1;
  Index pad = 0;
};

Tensor conv_layer(const Tensor& x, const ConvParams& p);

struct SpatialPriorParams {
  std::array<ConvParams, 3> stem;  // 1/2, 1/4, 1/8
  ConvParams down16;
  ConvParams down32;
  std::array<Linear, kNumScales> proj;
};

/// Stem widths D/2, D/2, D followed by two stride-2 convs, all 3x3.
SpatialPriorParams make_spatial_prior(ParameterSet& params, Index dim, int group = 0);

/// [1 x H x W] image -> flattened priors with S = HW/64 + HW/256 + HW/1024 tokens.
MultiScaleTokens spatial_priors(const Tensor& image, const SpatialPriorParams& p);

}  // namespace lqa
