#include "pare/attention.hpp"

#include <cmath>

namespace pare {

Tensor multihead_attention(const Tensor& query_src, const Tensor& kv_src, int heads,
                           ParamStore& params, const std::string& prefix,
                           std::vector<Tensor>* probs_out) {
  const int64_t d = query_src.dim(1);
  if (kv_src.dim(1) != d) {
    throw TensorError("attention: query dim " + std::to_string(d) + " vs key/value dim " +
                      std::to_string(kv_src.dim(1)));
  }
  if (heads <= 0 || d % heads != 0) {
    throw TensorError("attention: embed dim " + std::to_string(d) +
                      " not divisible by head count " + std::to_string(heads));
  }
  const int64_t dh = d / heads;
  const real inv_sqrt_dh = static_cast<real>(1.0 / std::sqrt(static_cast<double>(dh)));

  Tensor q = linear(query_src, params.at(prefix + ".wq"), params.at(prefix + ".bq"));
  Tensor k = linear(kv_src, params.at(prefix + ".wk"), params.at(prefix + ".bk"));
  Tensor v = linear(kv_src, params.at(prefix + ".wv"), params.at(prefix + ".bv"));

  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, dh);
    Tensor kh = slice(k, 1, h * dh, dh);
    Tensor vh = slice(v, 1, h * dh, dh);
    Tensor scores = scale(matmul(qh, kh, false, true), inv_sqrt_dh);
    Tensor probs = softmax(scores, 1);
    if (probs_out) probs_out->push_back(probs);
    head_outs.push_back(matmul(probs, vh));
  }
  Tensor merged = heads == 1 ? head_outs[0] : concat(head_outs, 1);
  return linear(merged, params.at(prefix + ".wo"), params.at(prefix + ".bo"));
}

Tensor transformer_block(const Tensor& z, const Tensor* kv, int heads, ParamStore& params,
                         const std::string& prefix, std::vector<Tensor>* probs_out) {
  Tensor n1 = add_rowwise(mul_rowwise(layer_norm(z), params.at(prefix + ".ln1.g")),
                          params.at(prefix + ".ln1.b"));
  Tensor attn = multihead_attention(n1, kv ? *kv : n1, heads, params, prefix + ".attn",
                                    probs_out);
  Tensor z1 = add(z, attn);

  Tensor n2 = add_rowwise(mul_rowwise(layer_norm(z1), params.at(prefix + ".ln2.g")),
                          params.at(prefix + ".ln2.b"));
  Tensor h = gelu(linear(n2, params.at(prefix + ".mlp.w1"), params.at(prefix + ".mlp.b1")));
  Tensor m = linear(h, params.at(prefix + ".mlp.w2"), params.at(prefix + ".mlp.b2"));
  return add(z1, m);
}

void build_transformer_block(ParamStore& params, const std::string& prefix, int dim, Rng& rng) {
  const int64_t d = dim;
  const int64_t hidden = 4 * d;
  params.add(prefix + ".ln1.g", Tensor::full({d}, real(1)));
  params.add(prefix + ".ln1.b", Tensor::zeros({d}));
  params.add(prefix + ".ln2.g", Tensor::full({d}, real(1)));
  params.add(prefix + ".ln2.b", Tensor::zeros({d}));
  for (const char* nm : {".attn.wq", ".attn.wk", ".attn.wv"}) {
    params.add(prefix + nm, xavier_uniform({d, d}, d, d, rng));
  }
  params.add(prefix + ".attn.bq", Tensor::zeros({d}));
  params.add(prefix + ".attn.bk", Tensor::zeros({d}));
  params.add(prefix + ".attn.bv", Tensor::zeros({d}));
  // residual-branch output projections start small to keep early iterates tame
  Tensor wo({d, d});
  fill_normal(wo, rng, 0.02);
  params.add(prefix + ".attn.wo", std::move(wo));
  params.add(prefix + ".attn.bo", Tensor::zeros({d}));
  params.add(prefix + ".mlp.w1", xavier_uniform({d, hidden}, d, hidden, rng));
  params.add(prefix + ".mlp.b1", Tensor::zeros({hidden}));
  Tensor w2({hidden, d});
  fill_normal(w2, rng, 0.02);
  params.add(prefix + ".mlp.w2", std::move(w2));
  params.add(prefix + ".mlp.b2", Tensor::zeros({d}));
}

void build_cls_head(ParamStore& params, const std::string& prefix, int dim, Rng& rng) {
  const int64_t d = dim;
  const int64_t hidden = std::max<int64_t>(2, d / 2);
  params.add(prefix + ".w1", xavier_uniform({d, hidden}, d, hidden, rng));
  params.add(prefix + ".b1", Tensor::zeros({hidden}));
  // zero-init final layer: fresh heads emit uniform logits (CE = ln 2)
  params.add(prefix + ".w2", Tensor::zeros({hidden, 2}));
  params.add(prefix + ".b2", Tensor::zeros({2}));
}

Tensor cls_head(const Tensor& feat_row, ParamStore& params, const std::string& prefix) {
  Tensor x = feat_row.rank() == 1 ? reshape(feat_row, {1, feat_row.dim(0)}) : feat_row;
  Tensor h = gelu(linear(x, params.at(prefix + ".w1"), params.at(prefix + ".b1")));
  return linear(h, params.at(prefix + ".w2"), params.at(prefix + ".b2"));  // [1, 2]
}

}  // namespace pare
