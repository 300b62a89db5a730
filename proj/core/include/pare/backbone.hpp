#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pare/ops.hpp"
#include "pare/params.hpp"

namespace pare {

inline constexpr int kNumSegClasses = 5;  // background, lung, nodule, vessel, trachea

struct BackboneConfig {
  std::vector<int> level_channels{16, 32, 64, 128};
  int embed_dim = 256;
  std::array<int, 3> input_shape{32, 48, 48};

  int levels() const { return static_cast<int>(level_channels.size()); }
  void validate() const;  // >=2 levels, dims divisible by 2^(levels-1)
};

struct SegOutput {
  Tensor logits;  // [5, Z, Y, X]
  Tensor q;       // [1, D] nodule embedding
};

// One row per resolution level: encoder and decoder spatial dims must agree
// where skip connections join.
struct LevelShape {
  int level;
  int channels;
  std::array<int64_t, 3> spatial;
  bool skip_joined;
};
std::vector<LevelShape> describe_backbone(const BackboneConfig& cfg);

void build_backbone_params(const BackboneConfig& cfg, ParamStore& params, Rng& rng);

SegOutput forward_backbone(const Tensor& image, const BackboneConfig& cfg, ParamStore& params);

// 0.5 * (soft Dice loss averaged over the 5 classes + voxelwise cross-entropy).
// Mask values must lie in 0..4.
struct SegLossParts {
  Tensor dice_loss;  // scalar, in [0, 1]
  Tensor ce;         // scalar
  Tensor combined;   // 0.5 * (dice_loss + ce)
};
SegLossParts seg_loss_parts(const Tensor& logits, std::span<const uint8_t> mask);
Tensor seg_loss(const Tensor& logits, std::span<const uint8_t> mask);

}  // namespace pare
