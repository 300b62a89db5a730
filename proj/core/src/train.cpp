#include "pare/train.hpp"

#include <cmath>
#include <cstdio>

namespace pare {
namespace {

// Collapses a 5-class mask to nodule-vs-background for the Context* arm
// (only the nodule structure is supervised).
std::vector<uint8_t> nodule_only(const std::vector<uint8_t>& mask) {
  std::vector<uint8_t> out(mask.size(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == 2) out[i] = 2;
  }
  return out;
}

Tensor one_hot_probs(const std::vector<uint8_t>& mask, const std::array<int, 3>& grid) {
  const int64_t v = int64_t(grid[0]) * grid[1] * grid[2];
  Tensor t(Shape{kNumSegClasses, grid[0], grid[1], grid[2]});
  auto td = t.data();
  for (int64_t i = 0; i < v; ++i) td[int64_t(mask[std::size_t(i)]) * v + i] = real(1);
  return t;
}

Tensor image_as_input(const VolumeSample& s) {
  // [Dz,Dy,Dx] -> [1,Dz,Dy,Dx]; plain data copy, never on the tape
  Tensor t(Shape{1, s.grid[0], s.grid[1], s.grid[2]},
           std::vector<real>(s.image.data().begin(), s.image.data().end()));
  return t;
}

}  // namespace

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.model = ModelConfig::desk();
  cfg.batch_size = 8;
  cfg.total_iters = 1500;
  return cfg;
}

TrainConfig TrainConfig::paper() {
  TrainConfig cfg;
  cfg.model = ModelConfig::paper();
  cfg.batch_size = 64;
  cfg.total_iters = 10000;
  cfg.bank_warmup_iters = 500;
  return cfg;
}

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw TensorError("train: batch_size must be >= 1");
  if (total_iters < 1) throw TensorError("train: total_iters must be >= 1");
  if (base_lr <= 0) throw TensorError("train: base_lr must be positive");
  if (teacher_forcing < 0 || teacher_forcing > 1) {
    throw TensorError("train: teacher_forcing must lie in [0, 1]");
  }
  if (bank_warmup_iters < 0) throw TensorError("train: bank_warmup_iters must be >= 0");
}

std::string StepReport::to_keyvalues() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "iter=%lld lr=%.8f seg=%.6f cls_p1=%.6f cls_p2=%.6f cls_p3=%.6f J=%.6f "
                "grad_norm=%.6f",
                (long long)iter, lr, seg_loss, cls_loss_p1, cls_loss_p2, cls_loss_p3, total,
                grad_norm);
  return buf;
}

TrainState TrainState::init(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.cfg = cfg;
  st.opt = SgdMomentum(cfg.momentum);
  build_model_params(cfg.model, cfg.arm, st.params, cfg.seed);
  st.bank = PrototypeBank::random_init(cfg.model.n_prototypes, cfg.model.backbone.embed_dim,
                                       cfg.model.lambda, cfg.seed);
  return st;
}

std::vector<const VolumeSample*> sample_batch(const std::vector<VolumeSample>& data,
                                              const TrainConfig& cfg, int64_t iter) {
  if (data.empty()) throw TensorError("sample_batch: empty dataset");
  Rng rng(Rng::mix(cfg.seed, rng_tag::kIter, static_cast<uint64_t>(iter)));
  std::vector<const VolumeSample*> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  if (cfg.balanced_sampling) {
    std::vector<const VolumeSample*> by_class[2];
    for (const VolumeSample& s : data) by_class[s.label == 1 ? 1 : 0].push_back(&s);
    if (!by_class[0].empty() && !by_class[1].empty()) {
      for (int i = 0; i < cfg.batch_size; ++i) {
        const auto& pool = by_class[i % 2];
        batch.push_back(pool[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int64_t>(pool.size())))]);
      }
      return batch;
    }
    // single-class data: fall through to uniform sampling
  }
  for (int i = 0; i < cfg.batch_size; ++i) {
    batch.push_back(
        &data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(data.size())))]);
  }
  return batch;
}

StepReport train_step(TrainState& state, const std::vector<const VolumeSample*>& batch) {
  if (batch.empty()) throw TensorError("train_step: empty batch");
  const TrainConfig& cfg = state.cfg;
  const Arm arm = cfg.arm;
  const real inv_b = real(1) / real(batch.size());
  // per-sample teacher-forcing coins come from the iteration stream
  Rng coin(Rng::mix(cfg.seed ^ 0x7465616368ull, rng_tag::kIter,
                    static_cast<uint64_t>(state.iteration)));

  AutogradScope tape;
  state.params.zero_grads();

  Tensor seg_sum, p1_sum, p2_sum, p3_sum;
  auto accumulate = [](Tensor& acc, const Tensor& term) {
    acc = acc.defined() ? add(acc, term) : term;
  };

  struct PendingUpdate {
    std::vector<real> embed;
    int label;
  };
  std::vector<PendingUpdate> updates;

  const bool wants_seg = arm != Arm::kPureCls;
  const bool has_context = arm == Arm::kFull || arm == Arm::kContextStar;

  for (const VolumeSample* sample : batch) {
    const bool teacher = coin.uniform01() < cfg.teacher_forcing;
    std::vector<uint8_t> mask_for_loss;
    if (sample->has_mask()) {
      mask_for_loss =
          (arm == Arm::kContextStar) ? nodule_only(sample->mask) : sample->mask;
    }
    Tensor teacher_probs;
    if (has_context && teacher && sample->has_mask()) {
      teacher_probs = one_hot_probs(mask_for_loss, sample->grid);
    }
    Tensor image = image_as_input(*sample);
    ModelOutput out = forward_model(image, cfg.model, arm, state.params,
                                    arm == Arm::kFull ? &state.bank : nullptr,
                                    teacher_probs.defined() ? &teacher_probs : nullptr);

    if (wants_seg && sample->has_mask()) {
      accumulate(seg_sum, seg_loss(out.seg_logits, mask_for_loss));
    }
    const std::vector<uint8_t> label{static_cast<uint8_t>(sample->label)};
    switch (arm) {
      case Arm::kFull:
        accumulate(p1_sum, cross_entropy_logits(reshape(out.p1, {2, 1}), label));
        if (cfg.model.deep_supervision) {
          accumulate(p2_sum, cross_entropy_logits(reshape(out.p2, {2, 1}), label));
          accumulate(p3_sum, cross_entropy_logits(reshape(out.p3, {2, 1}), label));
        }
        break;
      case Arm::kContextStar:
        accumulate(p2_sum, cross_entropy_logits(reshape(out.p2, {2, 1}), label));
        if (cfg.model.deep_supervision) {
          accumulate(p3_sum, cross_entropy_logits(reshape(out.p3, {2, 1}), label));
        }
        break;
      case Arm::kPureCls:
      case Arm::kMultiTask:
        accumulate(p3_sum, cross_entropy_logits(reshape(out.p3, {2, 1}), label));
        break;
      case Arm::kPureSeg:
        break;
    }
    if (arm == Arm::kFull) {
      auto q = out.nodule_embed.data();
      updates.push_back({std::vector<real>(q.begin(), q.end()), sample->label});
    }
  }

  StepReport rep;
  rep.iter = state.iteration + 1;
  rep.lr = lr_schedule(state.iteration, cfg.total_iters, cfg.base_lr, cfg.warmup_frac);

  Tensor j;
  auto add_term = [&](Tensor& sum, double& field) {
    if (!sum.defined()) return;
    Tensor mean = scale(sum, inv_b);
    field = static_cast<double>(mean.item());
    j = j.defined() ? add(j, mean) : mean;
  };
  add_term(seg_sum, rep.seg_loss);
  add_term(p1_sum, rep.cls_loss_p1);
  add_term(p2_sum, rep.cls_loss_p2);
  add_term(p3_sum, rep.cls_loss_p3);
  if (!j.defined()) {
    if (arm != Arm::kPureSeg) {
      throw TensorError("train_step: arm produced no loss terms");
    }
    j = Tensor::scalar(0);  // all-maskless batch under the seg-only arm: no-op step
  }
  rep.total = static_cast<double>(j.item());
  if (!std::isfinite(rep.total)) {
    throw NumericError("train_step: non-finite loss; " + rep.to_keyvalues());
  }

  // prototype updates (Eq. of the bank): pre-update embeddings, sample order
  for (const PendingUpdate& u : updates) {
    momentum_update(state.bank, u.embed, u.label, state.iteration + 1);
    if (!state.bank_reinitialized && state.iteration < cfg.bank_warmup_iters) {
      (u.label == 0 ? state.warm_benign : state.warm_malignant).push_back(u.embed);
    }
  }

  tape.graph().backward(j);
  rep.grad_norm = state.params.grad_norm();
  if (!std::isfinite(rep.grad_norm)) {
    throw NumericError("train_step: non-finite gradients; " + rep.to_keyvalues());
  }
  if (cfg.clip_norm > 0) state.params.clip_grads(cfg.clip_norm);
  state.opt.step(state.params, rep.lr);
  state.iteration++;

  // one-time k-means condensation of the warm-up embeddings
  if (arm == Arm::kFull && !state.bank_reinitialized &&
      state.iteration >= cfg.bank_warmup_iters && cfg.bank_warmup_iters > 0) {
    if (!state.warm_benign.empty() && !state.warm_malignant.empty()) {
      state.bank = init_bank(state.warm_benign, state.warm_malignant, cfg.model.n_prototypes,
                             cfg.model.lambda, cfg.seed);
    }
    // a class with no warm-up embeddings keeps its random-init rows
    state.bank_reinitialized = true;
    state.warm_benign.clear();
    state.warm_malignant.clear();
  }
  return rep;
}

void train_loop(TrainState& state, const std::vector<VolumeSample>& train_data, int64_t iters,
                const StepCallback& on_step) {
  for (int64_t i = 0; i < iters; ++i) {
    auto batch = sample_batch(train_data, state.cfg, state.iteration);
    StepReport rep = train_step(state, batch);
    if (on_step) on_step(rep);
  }
}

namespace {
ModelOutput infer(const TrainState& state, const VolumeSample& sample) {
  Tensor image = image_as_input(sample);
  // const-cast is confined here: inference never mutates the store
  ParamStore& params = const_cast<ParamStore&>(state.params);
  return forward_model(image, state.cfg.model, state.cfg.arm, params,
                       state.cfg.arm == Arm::kFull ? &state.bank : nullptr, nullptr);
}
}  // namespace

double predict(const TrainState& state, const VolumeSample& sample, bool ensemble) {
  NoGradScope no_grad;
  ModelOutput out = infer(state, sample);
  return malignancy_score(out, state.cfg.arm, ensemble);
}

std::vector<double> score_samples(const TrainState& state,
                                  const std::vector<VolumeSample>& samples, bool ensemble) {
  NoGradScope no_grad;
  std::vector<double> out;
  out.reserve(samples.size());
  for (const VolumeSample& s : samples) {
    out.push_back(malignancy_score(infer(state, s), state.cfg.arm, ensemble));
  }
  return out;
}

EvalReport evaluate(const TrainState& state, const std::vector<VolumeSample>& samples,
                    bool ensemble) {
  NoGradScope no_grad;
  const Arm arm = state.cfg.arm;
  Predictions preds;
  std::vector<SampleInfo> infos;
  std::array<double, 5> dice_acc{};
  int64_t n_mask = 0;

  for (const VolumeSample& s : samples) {
    ModelOutput out = infer(state, s);
    preds.ids.push_back(s.id);
    preds.primary.push_back(malignancy_score(out, arm, ensemble));
    if (arm == Arm::kFull) {
      preds.p1.push_back(head_probability(out.p1));
      preds.p2.push_back(head_probability(out.p2));
      preds.p3.push_back(head_probability(out.p3));
      preds.ensemble.push_back(malignancy_score(out, arm, true));
    }
    infos.push_back({s.id, s.label, s.diameter_mm});

    if (s.has_mask() && arm != Arm::kPureCls) {
      // voxelwise argmax of the segmentation logits
      const int64_t v = s.voxels();
      auto ld = out.seg_logits.data();
      std::vector<uint8_t> pred_mask(static_cast<std::size_t>(v));
      for (int64_t i = 0; i < v; ++i) {
        int best = 0;
        real best_v = ld[i];
        for (int c = 1; c < kNumSegClasses; ++c) {
          if (ld[c * v + i] > best_v) {
            best_v = ld[c * v + i];
            best = c;
          }
        }
        pred_mask[std::size_t(i)] = static_cast<uint8_t>(best);
      }
      for (int c = 0; c < kNumSegClasses; ++c) {
        dice_acc[std::size_t(c)] += dice_score(pred_mask, s.mask, c);
      }
      ++n_mask;
    }
  }
  EvalReport rep = stratified_report(preds, infos);
  if (n_mask > 0) {
    for (double& d : dice_acc) d /= double(n_mask);
    rep.mean_dice_by_class = dice_acc;
    rep.n_with_mask = n_mask;
  }
  return rep;
}

}  // namespace pare
