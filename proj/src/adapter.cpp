#include "lqa/adapter.hpp"

#include <algorithm>
#include <string>

namespace lqa {

bool AdapterConfig::lq_enabled(Index block) const {
  return std::find(lq_blocks.begin(), lq_blocks.end(), block) != lq_blocks.end();
}

void AdapterConfig::validate() const {
  if (num_blocks <= 0) throw ShapeError("adapter: num_blocks must be positive");
  for (Index b : lq_blocks)
    if (b < 0 || b >= num_blocks)
      throw ShapeError("adapter: lq block " + std::to_string(b) + " outside [0, " + std::to_string(num_blocks) +
                       ")");
  if (lq_count < 0) throw ShapeError("adapter: lq_count must be non-negative");
  if (heads <= 0 || dim % heads != 0) throw ShapeError("adapter: dim not divisible by heads");
  if (ffn_ratio <= 0) throw ShapeError("adapter: ffn_ratio must be positive");
}

Index query_path_param_count(Index dim, bool writeback) {
  const Index attention = 4 * (dim * dim + dim);
  const Index norm = 2 * dim;
  Index total = 2 * attention + 4 * norm;
  if (writeback) total += attention + 2 * norm + dim;
  return total;
}

BlockParams make_block(ParameterSet& params, Index index, const AdapterConfig& config) {
  const Index d = config.dim;
  const int group = static_cast<int>(index);
  const std::string prefix = "adapter.block" + std::to_string(index);
  BlockParams b;

  const std::string inj = prefix + ".injector";
  b.injector.vit_norm = make_layer_norm(params, inj + ".vit_norm", d, true, group);
  b.injector.sp_norm = make_layer_norm(params, inj + ".sp_norm", d, true, group);
  b.injector.attn = make_attention(params, inj + ".attn", d, config.heads, true, group);
  b.injector.gamma = params.add(inj + ".gamma", {d}, Init::zeros(), true, group);

  const std::string ext = prefix + ".extractor";
  b.extractor.sp_norm = make_layer_norm(params, ext + ".sp_norm", d, true, group);
  b.extractor.vit_norm = make_layer_norm(params, ext + ".vit_norm", d, true, group);
  b.extractor.attn = make_attention(params, ext + ".attn", d, config.heads, true, group);
  b.extractor.ffn_norm = make_layer_norm(params, ext + ".ffn_norm", d, true, group);
  b.extractor.ffn = make_ffn(params, ext + ".ffn", d, d * config.ffn_ratio, true, group);

  if (config.lq_enabled(index)) {
    const std::string lq = prefix + ".lq";
    QueryPathParams q;
    q.query_norm = make_layer_norm(params, lq + ".query_norm", d, true, group);
    q.vit_norm = make_layer_norm(params, lq + ".vit_norm", d, true, group);
    q.vit_attn = make_attention(params, lq + ".vit_attn", d, config.heads, true, group);
    q.refined_norm = make_layer_norm(params, lq + ".refined_norm", d, true, group);
    q.sp_norm = make_layer_norm(params, lq + ".sp_norm", d, true, group);
    q.sp_attn = make_attention(params, lq + ".sp_attn", d, config.heads, true, group);
    if (config.lq_writeback) {
      QueryPathParams::WriteBack wb;
      wb.sp_norm = make_layer_norm(params, lq + ".writeback.sp_norm", d, true, group);
      wb.query_norm = make_layer_norm(params, lq + ".writeback.query_norm", d, true, group);
      wb.attn = make_attention(params, lq + ".writeback.attn", d, config.heads, true, group);
      wb.rho = params.add(lq + ".writeback.rho", {d}, Init::zeros(), true, group);
      q.writeback = std::move(wb);
    }
    b.queries = std::move(q);
  }
  return b;
}

Tensor inject(const Tensor& vit, const MultiScaleTokens& sp, const InjectorParams& p) {
  const Tensor attended = cross_attention(layer_norm(vit, p.vit_norm), layer_norm(sp.data, p.sp_norm), p.attn);
  return gated_residual(vit, attended, p.gamma);
}

ExtractResult extract(const Tensor& vit, const Tensor& vit_injected, const MultiScaleTokens& sp,
                      const Tensor& queries, const BlockParams& p) {
  const ExtractorParams& e = p.extractor;
  // Query side is the spatial stream so the result keeps the S multi-scale rows.
  const Tensor pulled = cross_attention(layer_norm(sp.data, e.sp_norm), layer_norm(vit, e.vit_norm), e.attn);
  Tensor refined = add(pulled, ffn(layer_norm(pulled, e.ffn_norm), e.ffn));

  if (!p.queries) return {sp.with_data(refined), queries};
  if (!queries.defined()) throw std::invalid_argument("extract: block has a query path but no query state");

  const QueryPathParams& q = *p.queries;
  const Tensor read_vit =
      cross_attention(layer_norm(queries, q.query_norm), layer_norm(vit_injected, q.vit_norm), q.vit_attn);
  const Tensor updated = add(
      queries, cross_attention(layer_norm(read_vit, q.refined_norm), layer_norm(refined, q.sp_norm), q.sp_attn));

  if (q.writeback) {
    const auto& wb = *q.writeback;
    const Tensor written =
        cross_attention(layer_norm(refined, wb.sp_norm), layer_norm(updated, wb.query_norm), wb.attn);
    refined = gated_residual(refined, written, wb.rho);
  }
  return {sp.with_data(refined), updated};
}

LQAdapter::LQAdapter(const BackboneConfig& backbone, const AdapterConfig& adapter, ParameterSet& params)
    : backbone_(backbone, params), config_(adapter) {
  config_.validate();
  if (config_.dim != backbone.dim) throw ShapeError("adapter dim must equal backbone dim");
  if (config_.num_blocks != backbone.stages)
    throw ShapeError("adapter num_blocks (" + std::to_string(config_.num_blocks) +
                     ") must equal backbone stages (" + std::to_string(backbone.stages) + ")");
  scale_layout(backbone.image_size);

  spm_ = make_spatial_prior(params, config_.dim, 0);
  query_count_ = config_.lq_count > 0 ? config_.lq_count : backbone.num_tokens();
  if (config_.any_lq()) {
    const Init init = config_.lq_init == QueryInit::Zero ? Init::zeros() : Init::normal(0.02);
    initial_queries_ = params.add("adapter.lq0", {query_count_, config_.dim}, init, true, 0);
  }
  for (Index i = 0; i < config_.num_blocks; ++i) blocks_.push_back(make_block(params, i, config_));
}

LQAdapter::Output LQAdapter::forward(const Tensor& image) const {
  MultiScaleTokens spatial = spatial_priors(image, spm_);
  Tensor tokens = backbone_.patch_embed(image);
  Tensor queries = initial_queries_;
  for (Index i = 0; i < config_.num_blocks; ++i) {
    const BlockParams& block = blocks_[static_cast<std::size_t>(i)];
    const Tensor injected = inject(tokens, spatial, block.injector);
    tokens = backbone_.run_stage(injected, i);
    ExtractResult r = extract(tokens, injected, spatial, queries, block);
    spatial = std::move(r.spatial);
    queries = std::move(r.queries);
  }
  return {std::move(spatial), std::move(tokens), std::move(queries)};
}

}  // namespace lqa
