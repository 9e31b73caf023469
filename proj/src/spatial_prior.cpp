#include "lqa/spatial_prior.hpp"

#include <string>

namespace lqa {

Tensor MultiScaleTokens::scale(std::size_t i) const {
  return slice_rows(data, offsets.at(i), dims.at(i).tokens());
}

MultiScaleTokens MultiScaleTokens::with_data(Tensor values) const {
  MultiScaleTokens out = *this;
  out.data = std::move(values);
  out.validate();
  return out;
}

void MultiScaleTokens::validate() const {
  if (!data.defined() || data.rank() != 2) throw ShapeError("multi-scale tokens: data must be [S x D]");
  Index expected = 0;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    if (offsets[i] != expected || dims[i].tokens() <= 0)
      throw ShapeError("multi-scale tokens: corrupted offset for scale " + std::to_string(i));
    expected += dims[i].tokens();
  }
  if (expected != data.dim(0))
    throw ShapeError("multi-scale tokens: offsets cover " + std::to_string(expected) + " tokens but data has " +
                     std::to_string(data.dim(0)));
}

Index multiscale_token_count(Index height, Index width) {
  Index total = 0;
  for (Index s : kScaleStrides) total += (height / s) * (width / s);
  return total;
}

MultiScaleTokens scale_layout(Index image_size) {
  if (image_size <= 0 || image_size % kScaleStrides.back() != 0)
    throw ShapeError("spatial priors: image size " + std::to_string(image_size) + " not divisible by 32");
  MultiScaleTokens layout;
  Index at = 0;
  for (std::size_t i = 0; i < kNumScales; ++i) {
    layout.dims[i] = {image_size / kScaleStrides[i], image_size / kScaleStrides[i]};
    layout.offsets[i] = at;
    at += layout.dims[i].tokens();
  }
  return layout;
}

MultiScaleTokens flatten_scales(std::span<const Tensor, kNumScales> maps) {
  MultiScaleTokens out;
  std::array<Tensor, kNumScales> flat;
  Index at = 0;
  const Index channels = maps[0].dim(0);
  for (std::size_t i = 0; i < kNumScales; ++i) {
    const Tensor& m = maps[i];
    if (m.rank() != 3 || m.dim(0) != channels)
      throw ShapeError("flatten_scales: expected [D x h x w] maps with equal D, got " + to_string(m.shape()));
    out.dims[i] = {m.dim(1), m.dim(2)};
    out.offsets[i] = at;
    at += out.dims[i].tokens();
    flat[i] = transpose(reshape(m, {channels, out.dims[i].tokens()}));
  }
  out.data = concat_rows(flat);
  return out;
}

std::array<Tensor, kNumScales> split_scales(const MultiScaleTokens& tokens) {
  tokens.validate();
  std::array<Tensor, kNumScales> maps;
  for (std::size_t i = 0; i < kNumScales; ++i)
    maps[i] = reshape(transpose(tokens.scale(i)), {tokens.dim(), tokens.dims[i].height, tokens.dims[i].width});
  return maps;
}

Tensor conv_layer(const Tensor& x, const ConvParams& p) {
  return add_channel_bias(conv2d(x, p.kernel, p.stride, p.pad), p.bias);
}

namespace {

ConvParams make_conv(ParameterSet& params, const std::string& name, Index in, Index out, int group) {
  constexpr Index k = 3;
  return {params.add(name + ".kernel", {out, in, k, k}, Init::xavier(in * k * k, out * k * k), true, group),
          params.add(name + ".bias", {out}, Init::zeros(), true, group), 2, 1};
}

}  // namespace

SpatialPriorParams make_spatial_prior(ParameterSet& params, Index dim, int group) {
  if (dim < 2 || dim % 2 != 0) throw ShapeError("spatial prior: dim must be even, got " + std::to_string(dim));
  const Index half = dim / 2;
  SpatialPriorParams p;
  p.stem[0] = make_conv(params, "spm.stem0", 1, half, group);
  p.stem[1] = make_conv(params, "spm.stem1", half, half, group);
  p.stem[2] = make_conv(params, "spm.stem2", half, dim, group);
  p.down16 = make_conv(params, "spm.down16", dim, dim, group);
  p.down32 = make_conv(params, "spm.down32", dim, dim, group);
  for (std::size_t i = 0; i < kNumScales; ++i)
    p.proj[i] = make_linear(params, "spm.proj" + std::to_string(i), dim, dim, true, group);
  return p;
}

MultiScaleTokens spatial_priors(const Tensor& image, const SpatialPriorParams& p) {
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0)
    throw ShapeError("spatial_priors: expected [1 x H x W] image with H, W divisible by 32, got " +
                     to_string(image.shape()));
  Tensor x = image;
  for (const ConvParams& c : p.stem) x = gelu(conv_layer(x, c));
  const Tensor c8 = x;
  const Tensor c16 = gelu(conv_layer(c8, p.down16));
  const Tensor c32 = gelu(conv_layer(c16, p.down32));
  const std::array<Tensor, kNumScales> maps{c8, c16, c32};

  MultiScaleTokens flat = flatten_scales(maps);
  std::array<Tensor, kNumScales> projected;
  for (std::size_t i = 0; i < kNumScales; ++i) projected[i] = linear(flat.scale(i), p.proj[i]);
  return flat.with_data(concat_rows(projected));
}

}  // namespace lqa
