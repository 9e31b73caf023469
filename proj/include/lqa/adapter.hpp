#pragma once

#include "lqa/attention.hpp"
#include "lqa/backbone.hpp"
#include "lqa/parameters.hpp"
#include "lqa/spatial_prior.hpp"
#include "lqa/tensor.hpp"

#include <optional>
#include <vector>

namespace lqa {

enum class QueryInit { Zero, Random };

struct AdapterConfig {
  Index num_blocks = 4;
  /// Learnable query count; 0 selects the backbone token count.
  Index lq_count = 0;
  QueryInit lq_init = QueryInit::Zero;
  /// Blocks whose extractor carries the learnable-query path.
  std::vector<Index> lq_blocks{0, 1, 2, 3};
  bool lq_writeback = true;
  Index dim = 32;
  Index heads = 4;
  Index ffn_ratio = 4;

  bool lq_enabled(Index block) const;
  bool any_lq() const { return !lq_blocks.empty(); }
  void validate() const;
};

struct InjectorParams {
  LayerNormParams vit_norm;
  LayerNormParams sp_norm;
  AttentionParams attn;
  Tensor gamma;  // [D], zero at init
};

struct ExtractorParams {
  LayerNormParams sp_norm;
  LayerNormParams vit_norm;
  AttentionParams attn;
  LayerNormParams ffn_norm;
  FFNParams ffn;
};

/// Per-block learnable-query path: queries read the injected backbone
/// tokens, then the refined spatial features; optionally the updated queries
/// are written back into the spatial stream behind the zero-init gate rho.
struct QueryPathParams {
  LayerNormParams query_norm;
  LayerNormParams vit_norm;
  AttentionParams vit_attn;
  LayerNormParams refined_norm;
  LayerNormParams sp_norm;
  AttentionParams sp_attn;

  struct WriteBack {
    LayerNormParams sp_norm;
    LayerNormParams query_norm;
    AttentionParams attn;
    Tensor rho;  // [D], zero at init
  };
  std::optional<WriteBack> writeback;
};

struct BlockParams {
  InjectorParams injector;
  ExtractorParams extractor;
  std::optional<QueryPathParams> queries;
};

/// Declared parameter total of one block's query path.
Index query_path_param_count(Index dim, bool writeback);

BlockParams make_block(ParameterSet& params, Index index, const AdapterConfig& config);

/// vit + gamma * Attention(q = norm(vit), kv = norm(sp)).
Tensor inject(const Tensor& vit, const MultiScaleTokens& sp, const InjectorParams& p);

struct ExtractResult {
  MultiScaleTokens spatial;
  Tensor queries;  // undefined when the block has no query path and none came in
};

/// `vit` is the stage output; `vit_injected` the injector output the queries
/// attend to. `queries` may be undefined only for blocks without a query path.
ExtractResult extract(const Tensor& vit, const Tensor& vit_injected, const MultiScaleTokens& sp,
                      const Tensor& queries, const BlockParams& p);

/// Frozen backbone, spatial prior module and interaction blocks.
class LQAdapter {
 public:
  LQAdapter(const BackboneConfig& backbone, const AdapterConfig& adapter, ParameterSet& params);

  struct Output {
    MultiScaleTokens spatial;
    Tensor tokens;
    Tensor queries;
  };

  Output forward(const Tensor& image) const;

  const Backbone& backbone() const { return backbone_; }
  const AdapterConfig& config() const { return config_; }
  const SpatialPriorParams& spatial_prior() const { return spm_; }
  const std::vector<BlockParams>& blocks() const { return blocks_; }
  const Tensor& initial_queries() const { return initial_queries_; }
  Index query_count() const { return query_count_; }

 private:
  Backbone backbone_;
  AdapterConfig config_;
  SpatialPriorParams spm_;
  std::vector<BlockParams> blocks_;
  Tensor initial_queries_;
  Index query_count_ = 0;
};

}  // namespace lqa
