#include "pare/context.hpp"

#include "pare/backbone.hpp"

namespace pare {

void TokenizerConfig::validate(const std::array<int, 3>& grid) const {
  if (embed_dim <= 0) throw TensorError("tokenizer: embed_dim must be positive");
  (void)token_count(grid);  // throws with the offending axis
}

int64_t TokenizerConfig::token_count(const std::array<int, 3>& grid) const {
  return window_count(Shape{grid[0], grid[1], grid[2]}, window, stride);
}

void build_context_params(const TokenizerConfig& cfg, const std::array<int, 3>& grid,
                          ParamStore& params, Rng& rng, bool pos_for_nodule_token) {
  const int64_t g = cfg.token_count(grid);
  const int64_t wvol = int64_t(cfg.window[0]) * cfg.window[1] * cfg.window[2];
  const int64_t d = cfg.embed_dim;
  params.add("context.embed_mask.w",
             xavier_uniform({kNumSegClasses * wvol, d}, kNumSegClasses * wvol, d, rng));
  params.add("context.embed_mask.b", Tensor::zeros({d}));
  params.add("context.embed_image.w", xavier_uniform({wvol, d}, wvol, d, rng));
  params.add("context.embed_image.b", Tensor::zeros({d}));
  params.add("context.pos", trunc_normal_02({g, d}, rng));
  if (pos_for_nodule_token) {
    params.add("context.pos_nodule", trunc_normal_02({1, d}, rng));
  }
}

Tensor tokenize(const Tensor& image, const Tensor& context_probs, const Tensor& nodule_embed,
                const TokenizerConfig& cfg, ParamStore& params) {
  if (context_probs.rank() != 4 || context_probs.dim(0) != kNumSegClasses) {
    throw TensorError("tokenize: context probs must be [5, Z, Y, X], got " +
                      shape_str(context_probs.shape()));
  }
  if (image.rank() != 4 || image.dim(0) != 1) {
    throw TensorError("tokenize: image must be [1, Z, Y, X], got " + shape_str(image.shape()));
  }
  for (int a = 1; a < 4; ++a) {
    if (image.dim(a) != context_probs.dim(a)) {
      throw TensorError("tokenize: image " + shape_str(image.shape()) + " vs mask " +
                        shape_str(context_probs.shape()));
    }
  }
  if (nodule_embed.rank() != 2 || nodule_embed.dim(0) != 1 ||
      nodule_embed.dim(1) != cfg.embed_dim) {
    throw TensorError("tokenize: nodule embedding must be [1, " +
                      std::to_string(cfg.embed_dim) + "], got " +
                      shape_str(nodule_embed.shape()));
  }

  Tensor mask_windows = extract_windows(context_probs, cfg.window, cfg.stride);  // [g, 5*w^3]
  Tensor image_windows = extract_windows(image, cfg.window, cfg.stride);         // [g, w^3]
  Tensor tokens = add(linear(mask_windows, params.at("context.embed_mask.w"),
                             params.at("context.embed_mask.b")),
                      linear(image_windows, params.at("context.embed_image.w"),
                             params.at("context.embed_image.b")));
  tokens = add(tokens, params.at("context.pos"));

  Tensor head = params.contains("context.pos_nodule")
                    ? add(nodule_embed, params.at("context.pos_nodule"))
                    : nodule_embed;
  return concat({head, tokens}, 0);  // [g+1, D]
}

void build_sca_params(ParamStore& params, int layers, int dim, Rng& rng) {
  for (int l = 0; l < layers; ++l) {
    build_transformer_block(params, "sca.l" + std::to_string(l), dim, rng);
  }
}

Tensor sca_forward(const Tensor& tokens, int layers, int heads, ParamStore& params,
                   std::vector<Tensor>* probs_out) {
  if (layers < 1) throw TensorError("sca: layer count must be >= 1");
  Tensor z = tokens;
  for (int l = 0; l < layers; ++l) {
    z = transformer_block(z, nullptr, heads, params, "sca.l" + std::to_string(l), probs_out);
  }
  return z;
}

}  // namespace pare
