#include "pare/backbone.hpp"

#include <cmath>

namespace pare {
namespace {

constexpr real kDiceSmooth = real(1e-5);

std::string lvl(const std::string& stem, int i) { return stem + std::to_string(i); }

// conv3x3 (stride 1, pad 1) -> per-channel layer norm -> GELU
Tensor conv_block(const Tensor& x, ParamStore& params, const std::string& prefix) {
  Tensor h = conv3d(x, params.at(prefix + ".w"), params.at(prefix + ".b"), 1, 1);
  const Shape s = h.shape();
  Tensor flat = reshape(h, {s[0], s[1] * s[2] * s[3]});
  Tensor normed = mul_chanwise(layer_norm(flat), params.at(prefix + ".ln.g"));
  normed = add_chanwise(normed, params.at(prefix + ".ln.b"));
  return gelu(reshape(normed, s));
}

void add_conv(ParamStore& params, const std::string& prefix, int cin, int cout, int k, Rng& rng) {
  params.add(prefix + ".w", he_normal({cout, cin, k, k, k}, int64_t(cin) * k * k * k, rng));
  params.add(prefix + ".b", Tensor::zeros({cout}));
}

void add_block(ParamStore& params, const std::string& prefix, int cin, int cout, Rng& rng) {
  add_conv(params, prefix, cin, cout, 3, rng);
  params.add(prefix + ".ln.g", Tensor::full({cout}, real(1)));
  params.add(prefix + ".ln.b", Tensor::zeros({cout}));
}

}  // namespace

void BackboneConfig::validate() const {
  if (levels() < 2) {
    throw TensorError("backbone: need at least 2 levels, got " + std::to_string(levels()));
  }
  for (int c : level_channels) {
    if (c <= 0) throw TensorError("backbone: channels must be positive");
  }
  if (embed_dim <= 0) throw TensorError("backbone: embed_dim must be positive");
  const int div = 1 << (levels() - 1);
  for (int a = 0; a < 3; ++a) {
    if (input_shape[static_cast<std::size_t>(a)] % div != 0) {
      throw TensorError("backbone: input dim " +
                        std::to_string(input_shape[static_cast<std::size_t>(a)]) +
                        " not divisible by 2^" + std::to_string(levels() - 1));
    }
  }
}

std::vector<LevelShape> describe_backbone(const BackboneConfig& cfg) {
  cfg.validate();
  std::vector<LevelShape> out;
  std::array<int64_t, 3> sp{cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]};
  for (int i = 0; i < cfg.levels(); ++i) {
    out.push_back({i, cfg.level_channels[static_cast<std::size_t>(i)], sp,
                   i < cfg.levels() - 1});
    for (auto& d : sp) d /= 2;
  }
  // decoder retraces the same shapes; assert the halving/doubling round-trips
  for (int i = cfg.levels() - 2; i >= 0; --i) {
    std::array<int64_t, 3> up{out[static_cast<std::size_t>(i) + 1].spatial};
    for (auto& d : up) d *= 2;
    if (up != out[static_cast<std::size_t>(i)].spatial) {
      throw TensorError("backbone: decoder level " + std::to_string(i) +
                        " does not restore encoder resolution");
    }
  }
  return out;
}

void build_backbone_params(const BackboneConfig& cfg, ParamStore& params, Rng& rng) {
  cfg.validate();
  const auto& ch = cfg.level_channels;
  const int n = cfg.levels();
  add_block(params, "backbone.enc0.b0", 1, ch[0], rng);
  add_block(params, "backbone.enc0.b1", ch[0], ch[0], rng);
  for (int i = 1; i < n; ++i) {
    add_conv(params, lvl("backbone.down", i), ch[i - 1], ch[i], 3, rng);
    add_block(params, lvl("backbone.enc", i) + ".b0", ch[i], ch[i], rng);
    add_block(params, lvl("backbone.enc", i) + ".b1", ch[i], ch[i], rng);
  }
  for (int i = n - 2; i >= 0; --i) {
    // transposed conv k2 s2: [Cin, Cout, 2, 2, 2]
    params.add(lvl("backbone.dec", i) + ".up.w",
               he_normal({ch[i + 1], ch[i], 2, 2, 2}, int64_t(ch[i + 1]) * 8, rng));
    params.add(lvl("backbone.dec", i) + ".up.b", Tensor::zeros({ch[i]}));
    add_block(params, lvl("backbone.dec", i) + ".b0", 2 * ch[i], ch[i], rng);
    add_block(params, lvl("backbone.dec", i) + ".b1", ch[i], ch[i], rng);
  }
  add_conv(params, "backbone.seghead", ch[0], kNumSegClasses, 1, rng);
  params.add("backbone.q.w",
             xavier_uniform({ch[n - 1], cfg.embed_dim}, ch[n - 1], cfg.embed_dim, rng));
  params.add("backbone.q.b", Tensor::zeros({cfg.embed_dim}));
}

SegOutput forward_backbone(const Tensor& image, const BackboneConfig& cfg, ParamStore& params) {
  const Shape expect{1, cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]};
  if (image.shape() != expect) {
    throw TensorError("backbone: expected image " + shape_str(expect) + ", got " +
                      shape_str(image.shape()));
  }
  const int n = cfg.levels();
  std::vector<Tensor> skips;
  Tensor h = conv_block(image, params, "backbone.enc0.b0");
  h = conv_block(h, params, "backbone.enc0.b1");
  skips.push_back(h);
  for (int i = 1; i < n; ++i) {
    h = conv3d(h, params.at(lvl("backbone.down", i) + ".w"),
               params.at(lvl("backbone.down", i) + ".b"), 2, 1);
    h = conv_block(h, params, lvl("backbone.enc", i) + ".b0");
    h = conv_block(h, params, lvl("backbone.enc", i) + ".b1");
    if (i < n - 1) skips.push_back(h);
  }

  Tensor pooled = global_avg_pool(h);  // [C_last]
  Tensor q = linear(reshape(pooled, {1, pooled.dim(0)}), params.at("backbone.q.w"),
                    params.at("backbone.q.b"));

  for (int i = n - 2; i >= 0; --i) {
    h = conv_transpose3d(h, params.at(lvl("backbone.dec", i) + ".up.w"),
                         params.at(lvl("backbone.dec", i) + ".up.b"), 2);
    h = concat({h, skips[static_cast<std::size_t>(i)]}, 0);
    h = conv_block(h, params, lvl("backbone.dec", i) + ".b0");
    h = conv_block(h, params, lvl("backbone.dec", i) + ".b1");
  }
  Tensor logits =
      conv3d(h, params.at("backbone.seghead.w"), params.at("backbone.seghead.b"), 1, 0);
  return SegOutput{logits, q};
}

SegLossParts seg_loss_parts(const Tensor& logits, std::span<const uint8_t> mask) {
  if (logits.rank() != 4 || logits.dim(0) != kNumSegClasses) {
    throw TensorError("seg_loss: expected [5, Z, Y, X] logits, got " + shape_str(logits.shape()));
  }
  const int64_t v = logits.numel() / kNumSegClasses;
  if (static_cast<int64_t>(mask.size()) != v) {
    throw TensorError("seg_loss: mask has " + std::to_string(mask.size()) + " voxels, logits " +
                      std::to_string(v));
  }
  std::vector<uint8_t> labels(mask.begin(), mask.end());
  for (uint8_t m : labels) {
    if (m >= kNumSegClasses) {
      throw TensorError("seg_loss: mask value " + std::to_string(int(m)) + " outside 0..4");
    }
  }
  Tensor flat = reshape(logits, {kNumSegClasses, v});
  Tensor ce = cross_entropy_logits(flat, labels);

  Tensor probs = softmax(flat, 0);
  Tensor onehot({kNumSegClasses, v});
  std::vector<real> class_count(kNumSegClasses, real(0));
  {
    auto od = onehot.data();
    for (int64_t i = 0; i < v; ++i) {
      od[labels[static_cast<std::size_t>(i)] * v + i] = real(1);
      class_count[labels[static_cast<std::size_t>(i)]] += real(1);
    }
  }
  Tensor inter = sum_axis(mul(probs, onehot), 1);  // [5]
  Tensor psum = sum_axis(probs, 1);                // [5]
  Tensor msum(Shape{kNumSegClasses}, class_count);
  Tensor dice = div(add_scalar(scale(inter, real(2)), kDiceSmooth),
                    add_scalar(add(psum, msum), kDiceSmooth));
  Tensor dice_loss = add_scalar(scale(mean_all(dice), real(-1)), real(1));
  return SegLossParts{dice_loss, ce, scale(add(dice_loss, ce), real(0.5))};
}

Tensor seg_loss(const Tensor& logits, std::span<const uint8_t> mask) {
  return seg_loss_parts(logits, mask).combined;
}

}  // namespace pare
