#pragma once

#include <optional>
#include <string>

#include "pare/backbone.hpp"
#include "pare/context.hpp"
#include "pare/prototype.hpp"

namespace pare {

// Ablation arms. Names mirror the comparison table emitted by the CLI.
enum class Arm {
  kFull,         // MT+Context+Prototype
  kPureCls,      // backbone + q head only, no segmentation supervision
  kPureSeg,      // segmentation only; malignancy scored by nodule volume fraction
  kMultiTask,    // backbone + segmentation + q head
  kContextStar,  // multi-task + SCA, nodule-only segmentation supervision
};

const char* arm_name(Arm arm);
Arm arm_from_name(const std::string& name);

struct ModelConfig {
  BackboneConfig backbone;
  TokenizerConfig tokenizer;
  int layers = 4;            // transformer depth of SCA and of CPA
  int heads = 8;
  int n_prototypes = 40;     // split evenly between the class banks
  real lambda = real(0.95);
  bool deep_supervision = true;
  bool pos_for_nodule_token = true;

  void validate() const;
  int64_t context_tokens() const { return tokenizer.token_count(backbone.input_shape); }

  // Paper-scale configuration: 32x48x48 input, D=256, L=4, N=40, stride-4
  // overlapped tokenizer.
  static ModelConfig paper();
  // Desk-scale configuration used by the default training preset.
  static ModelConfig desk();
  // Minimal configuration for fast unit tests (stride = window).
  static ModelConfig micro();
  // Tiny configuration sized for per-coordinate finite-difference sweeps.
  static ModelConfig grad_check();
};

// Builds every parameter the arm needs (and only those).
void build_model_params(const ModelConfig& cfg, Arm arm, ParamStore& params, uint64_t seed);

struct ModelOutput {
  Tensor seg_logits;   // defined unless arm == kPureCls ... always produced by backbone
  Tensor nodule_embed; // [1, D] (undefined for kPureSeg)
  Tensor p1, p2, p3;   // [1, 2] logits; undefined where the arm has no such head
};

// Runs the arm's forward graph. `teacher_probs`, when provided, replaces the
// predicted class probabilities as tokenizer input (training-time teacher
// forcing with ground-truth one-hot masks).
ModelOutput forward_model(const Tensor& image, const ModelConfig& cfg, Arm arm,
                          ParamStore& params, const PrototypeBank* bank,
                          const Tensor* teacher_probs = nullptr);

// Malignancy score in [0, 1] for one forward output (inference convention):
// ensemble averages the available heads' softmax probabilities; otherwise the
// arm's final head decides. kPureSeg scores by predicted nodule volume fraction.
double malignancy_score(const ModelOutput& out, Arm arm, bool ensemble);

// Softmax malignant probability of a [1,2] logit row.
double head_probability(const Tensor& logits);

}  // namespace pare
