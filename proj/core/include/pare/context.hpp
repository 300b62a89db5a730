#pragma once

#include <array>

#include "pare/attention.hpp"
#include "pare/ops.hpp"

namespace pare {

struct TokenizerConfig {
  std::array<int, 3> window{8, 8, 8};
  std::array<int, 3> stride{4, 4, 4};
  int embed_dim = 256;

  void validate(const std::array<int, 3>& grid) const;
  int64_t token_count(const std::array<int, 3>& grid) const;
};

void build_context_params(const TokenizerConfig& cfg, const std::array<int, 3>& grid,
                          ParamStore& params, Rng& rng, bool pos_for_nodule_token = true);

// Builds the working sequence [q; t_1..t_g] of shape [g+1, D]:
// each window contributes affine(mask window) + affine(image window) plus its
// learned position vector; row 0 is the nodule embedding with its own
// position vector (when enabled at build time).
Tensor tokenize(const Tensor& image, const Tensor& context_probs, const Tensor& nodule_embed,
                const TokenizerConfig& cfg, ParamStore& params);

// L pre-norm self-attention blocks over the whole sequence.
Tensor sca_forward(const Tensor& tokens, int layers, int heads, ParamStore& params,
                   std::vector<Tensor>* probs_out = nullptr);

void build_sca_params(ParamStore& params, int layers, int dim, Rng& rng);

}  // namespace pare
