#pragma once

#include <string>
#include <vector>

#include "pare/ops.hpp"
#include "pare/params.hpp"

namespace pare {

// Multi-head attention over 2D token matrices [T, D]. Queries come from
// `query_src`, keys/values from `kv_src` (same tensor for self-attention).
// When `probs_out` is non-null, the per-head attention matrices [Tq, Tk] are
// exposed for tests.
Tensor multihead_attention(const Tensor& query_src, const Tensor& kv_src, int heads,
                           ParamStore& params, const std::string& prefix,
                           std::vector<Tensor>* probs_out = nullptr);

// Pre-norm residual transformer block:
//   z' = z + Attn(LN(z)*g1+b1 [, kv]);  out = z' + MLP(LN(z')*g2+b2)
// `kv` null selects self-attention over z. MLP hidden width is 4*D with GELU.
Tensor transformer_block(const Tensor& z, const Tensor* kv, int heads, ParamStore& params,
                         const std::string& prefix, std::vector<Tensor>* probs_out = nullptr);

// Registers the parameters for one block (layer norms, attention, MLP).
void build_transformer_block(ParamStore& params, const std::string& prefix, int dim, Rng& rng);

// Two-layer classification head: D -> D/2 -> 2 with GELU.
void build_cls_head(ParamStore& params, const std::string& prefix, int dim, Rng& rng);
Tensor cls_head(const Tensor& feat_row, ParamStore& params, const std::string& prefix);

}  // namespace pare
