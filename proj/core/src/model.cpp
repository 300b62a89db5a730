#include "pare/model.hpp"

#include <cmath>

namespace pare {

const char* arm_name(Arm arm) {
  switch (arm) {
    case Arm::kFull: return "MT+Context+Prototype";
    case Arm::kPureCls: return "Pure classification";
    case Arm::kPureSeg: return "Pure segmentation";
    case Arm::kMultiTask: return "MT";
    case Arm::kContextStar: return "MT+Context*";
  }
  return "?";
}

Arm arm_from_name(const std::string& name) {
  for (Arm a : {Arm::kFull, Arm::kPureCls, Arm::kPureSeg, Arm::kMultiTask, Arm::kContextStar}) {
    if (name == arm_name(a)) return a;
  }
  throw TensorError("unknown ablation arm '" + name + "'");
}

void ModelConfig::validate() const {
  backbone.validate();
  if (tokenizer.embed_dim != backbone.embed_dim) {
    throw TensorError("model: tokenizer embed dim " + std::to_string(tokenizer.embed_dim) +
                      " != backbone embed dim " + std::to_string(backbone.embed_dim));
  }
  tokenizer.validate(backbone.input_shape);
  if (layers < 1) throw TensorError("model: layers must be >= 1");
  if (heads < 1 || backbone.embed_dim % heads != 0) {
    throw TensorError("model: embed dim " + std::to_string(backbone.embed_dim) +
                      " not divisible by head count " + std::to_string(heads));
  }
  if (n_prototypes < 2 || n_prototypes % 2 != 0) {
    throw TensorError("model: prototype count must be even and >= 2");
  }
  if (lambda <= real(0) || lambda >= real(1)) {
    throw TensorError("model: lambda must lie in (0, 1)");
  }
}

ModelConfig ModelConfig::paper() {
  ModelConfig cfg;
  cfg.backbone.level_channels = {16, 32, 64, 128};
  cfg.backbone.embed_dim = 256;
  cfg.backbone.input_shape = {32, 48, 48};
  cfg.tokenizer.window = {8, 8, 8};
  cfg.tokenizer.stride = {4, 4, 4};
  cfg.tokenizer.embed_dim = 256;
  cfg.layers = 4;
  cfg.heads = 8;
  cfg.n_prototypes = 40;
  return cfg;
}

ModelConfig ModelConfig::desk() {
  ModelConfig cfg;
  cfg.backbone.level_channels = {8, 16};
  cfg.backbone.embed_dim = 64;
  cfg.backbone.input_shape = {16, 24, 24};
  cfg.tokenizer.window = {8, 8, 8};
  cfg.tokenizer.stride = {4, 4, 4};
  cfg.tokenizer.embed_dim = 64;
  cfg.layers = 2;
  cfg.heads = 8;
  cfg.n_prototypes = 8;
  return cfg;
}

ModelConfig ModelConfig::micro() {
  ModelConfig cfg;
  cfg.backbone.level_channels = {8, 16};
  cfg.backbone.embed_dim = 32;
  cfg.backbone.input_shape = {16, 24, 24};
  cfg.tokenizer.window = {8, 8, 8};
  cfg.tokenizer.stride = {8, 8, 8};
  cfg.tokenizer.embed_dim = 32;
  cfg.layers = 1;
  cfg.heads = 4;
  cfg.n_prototypes = 4;
  return cfg;
}

ModelConfig ModelConfig::grad_check() {
  ModelConfig cfg;
  cfg.backbone.level_channels = {2, 4};
  cfg.backbone.embed_dim = 16;
  cfg.backbone.input_shape = {8, 8, 8};
  cfg.tokenizer.window = {4, 4, 4};
  cfg.tokenizer.stride = {2, 2, 2};
  cfg.tokenizer.embed_dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.n_prototypes = 4;
  return cfg;
}

void build_model_params(const ModelConfig& cfg, Arm arm, ParamStore& params, uint64_t seed) {
  cfg.validate();
  Rng rng(Rng::mix(seed, rng_tag::kParams));
  build_backbone_params(cfg.backbone, params, rng);
  const int d = cfg.backbone.embed_dim;
  if (arm != Arm::kPureSeg) build_cls_head(params, "head.p3", d, rng);
  if (arm == Arm::kFull || arm == Arm::kContextStar) {
    build_context_params(cfg.tokenizer, cfg.backbone.input_shape, params, rng,
                         cfg.pos_for_nodule_token);
    build_sca_params(params, cfg.layers, d, rng);
    build_cls_head(params, "head.p2", d, rng);
  }
  if (arm == Arm::kFull) {
    build_cpa_params(params, cfg.layers, d, rng);
    build_cls_head(params, "head.p1", d, rng);
  }
}

ModelOutput forward_model(const Tensor& image, const ModelConfig& cfg, Arm arm,
                          ParamStore& params, const PrototypeBank* bank,
                          const Tensor* teacher_probs) {
  ModelOutput out;
  SegOutput seg = forward_backbone(image, cfg.backbone, params);
  out.seg_logits = seg.logits;
  if (arm == Arm::kPureSeg) return out;

  out.nodule_embed = seg.q;
  out.p3 = cls_head(seg.q, params, "head.p3");
  if (arm == Arm::kPureCls || arm == Arm::kMultiTask) return out;

  Tensor probs = teacher_probs ? *teacher_probs : softmax(seg.logits, 0);
  Tensor tokens = tokenize(image, probs, seg.q, cfg.tokenizer, params);
  Tensor z = sca_forward(tokens, cfg.layers, cfg.heads, params);
  out.p2 = cls_head(slice(z, 0, 0, 1), params, "head.p2");
  if (arm == Arm::kContextStar) return out;

  if (bank == nullptr) throw TensorError("forward_model: full arm requires a prototype bank");
  Tensor zc = cpa_forward(z, *bank, cfg.layers, cfg.heads, params);
  out.p1 = cls_head(slice(zc, 0, 0, 1), params, "head.p1");
  return out;
}

double head_probability(const Tensor& logits) {
  if (logits.numel() != 2) {
    throw TensorError("head_probability: expected 2 logits, got " + shape_str(logits.shape()));
  }
  auto d = logits.data();
  const double a = static_cast<double>(d[0]);
  const double b = static_cast<double>(d[1]);
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  return eb / (ea + eb);
}

double malignancy_score(const ModelOutput& out, Arm arm, bool ensemble) {
  if (arm == Arm::kPureSeg) {
    // fixed monotone surrogate: predicted nodule volume fraction
    NoGradScope no_grad;
    Tensor probs = softmax(out.seg_logits, 0);
    const int64_t v = probs.numel() / kNumSegClasses;
    auto pd = probs.data();
    double acc = 0;
    for (int64_t i = 0; i < v; ++i) acc += static_cast<double>(pd[2 * v + i]);
    return acc / static_cast<double>(v);
  }
  if (arm == Arm::kPureCls || arm == Arm::kMultiTask) return head_probability(out.p3);
  if (arm == Arm::kContextStar) return head_probability(out.p2);
  if (!ensemble) return head_probability(out.p1);
  return (head_probability(out.p1) + head_probability(out.p2) + head_probability(out.p3)) / 3.0;
}

}  // namespace pare
