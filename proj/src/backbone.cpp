#include "lqa/backbone.hpp"

#include <cmath>
#include <string>

namespace lqa {

void BackboneConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
    throw ShapeError("backbone: image size " + std::to_string(image_size) + " not divisible by patch size " +
                     std::to_string(patch_size));
  if (dim <= 0 || depth <= 0 || stages <= 0 || depth % stages != 0)
    throw ShapeError("backbone: depth " + std::to_string(depth) + " not divisible into " +
                     std::to_string(stages) + " stages");
  if (heads <= 0 || dim % heads != 0)
    throw ShapeError("backbone: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                     " heads");
  if (ffn_ratio <= 0) throw ShapeError("backbone: ffn_ratio must be positive");
}

Tensor sincos_position_table(Index grid, Index dim) {
  if (dim % 4 != 0) throw ShapeError("sincos_position_table: dim must be a multiple of 4");
  const Index quarter = dim / 4;
  Vector table(grid * grid * dim);
  for (Index row = 0; row < grid; ++row)
    for (Index col = 0; col < grid; ++col) {
      const Index token = row * grid + col;
      for (Index k = 0; k < quarter; ++k) {
        const Scalar omega = std::pow(10000.0, -static_cast<Scalar>(k) / static_cast<Scalar>(quarter));
        Scalar* out = table.data() + token * dim;
        out[k] = std::sin(col * omega);
        out[quarter + k] = std::cos(col * omega);
        out[2 * quarter + k] = std::sin(row * omega);
        out[3 * quarter + k] = std::cos(row * omega);
      }
    }
  return Tensor::from({grid * grid, dim}, std::move(table));
}

Tensor encoder_layer(const Tensor& tokens, const EncoderLayer& layer) {
  const Tensor x = add(tokens, self_attention(layer_norm(tokens, layer.attn_norm), layer.attn));
  return add(x, ffn(layer_norm(x, layer.ffn_norm), layer.ffn));
}

Backbone::Backbone(const BackboneConfig& config, ParameterSet& params) : config_(config) {
  config_.validate();
  const Index d = config_.dim, p = config_.patch_size;
  constexpr bool kFrozen = false;
  patch_kernel_ = params.add("backbone.patch_embed.kernel", {d, 1, p, p},
                             Init::normal(1.0 / static_cast<Scalar>(p)), kFrozen);
  patch_bias_ = params.add("backbone.patch_embed.bias", {d}, Init::zeros(), kFrozen);
  pos_embed_ = params.add("backbone.pos_embed", {config_.num_tokens(), d}, Init::zeros(), kFrozen);
  pos_embed_.mutable_data() = sincos_position_table(config_.grid(), d).data();
  for (Index i = 0; i < config_.depth; ++i) {
    const std::string prefix = "backbone.layer" + std::to_string(i);
    layers_.push_back({make_layer_norm(params, prefix + ".attn_norm", d, kFrozen),
                       make_attention(params, prefix + ".attn", d, config_.heads, kFrozen),
                       make_layer_norm(params, prefix + ".ffn_norm", d, kFrozen),
                       make_ffn(params, prefix + ".ffn", d, d * config_.ffn_ratio, kFrozen)});
  }
}

Tensor Backbone::patch_embed(const Tensor& image) const {
  const Index size = config_.image_size;
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) != size || image.dim(2) != size)
    throw ShapeError("patch_embed: expected [1 x " + std::to_string(size) + " x " + std::to_string(size) +
                     "] image, got " + to_string(image.shape()));
  const Index p = config_.patch_size;
  const Tensor maps = add_channel_bias(conv2d(image, patch_kernel_, p, 0), patch_bias_);
  const Tensor tokens = transpose(reshape(maps, {config_.dim, config_.num_tokens()}));
  return add(tokens, pos_embed_);
}

Tensor Backbone::run_stage(const Tensor& tokens, Index stage) const {
  if (stage < 0 || stage >= config_.stages)
    throw std::out_of_range("run_stage: stage " + std::to_string(stage) + " outside [0, " +
                            std::to_string(config_.stages) + ")");
  const Index per = config_.layers_per_stage();
  Tensor x = tokens;
  for (Index i = stage * per; i < (stage + 1) * per; ++i) x = encoder_layer(x, layers_[static_cast<std::size_t>(i)]);
  return x;
}

Tensor Backbone::encode(const Tensor& image) const {
  Tensor x = patch_embed(image);
  for (const EncoderLayer& layer : layers_) x = encoder_layer(x, layer);
  return x;
}

}  // namespace lqa
