#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pare/data.hpp"
#include "pare/metrics.hpp"
#include "pare/model.hpp"
#include "pare/params.hpp"

namespace pare {

struct TrainConfig {
  ModelConfig model;
  Arm arm = Arm::kFull;
  int batch_size = 8;
  int64_t total_iters = 1500;
  double base_lr = 1e-2;
  double momentum = 0.9;
  double warmup_frac = 0.05;   // lr warmup, fraction of total iterations
  double clip_norm = 10.0;     // 0 disables clipping
  double teacher_forcing = 0.5;
  int64_t bank_warmup_iters = 200;  // iterations before k-means re-initialization
  bool balanced_sampling = true;
  uint64_t seed = 0;

  // Desk-scale defaults: 16x24x24 input, D=64, L=2, N=8, batch 8, 1500 iters.
  static TrainConfig desk();
  // Clinical-scale constants kept as a named preset (not a CI target):
  // 32x48x48, D=256, L=4, N=40, batch 64, 10000 iters.
  static TrainConfig paper();

  void validate() const;
};

struct StepReport {
  int64_t iter = 0;
  double lr = 0;
  double seg_loss = 0;
  double cls_loss_p1 = 0;
  double cls_loss_p2 = 0;
  double cls_loss_p3 = 0;
  double total = 0;       // J = seg + p1 + p2 + p3 contributions
  double grad_norm = 0;
  std::string to_keyvalues() const;  // one machine-parseable line, no newline
};

struct TrainState {
  TrainConfig cfg;
  ParamStore params;
  SgdMomentum opt;
  PrototypeBank bank;
  int64_t iteration = 0;
  // nodule embeddings collected during warm-up, consumed by init_bank
  std::vector<std::vector<real>> warm_benign, warm_malignant;
  bool bank_reinitialized = false;

  static TrainState init(const TrainConfig& cfg);
};

// Deterministic batch for one iteration (balanced over classes when enabled).
std::vector<const VolumeSample*> sample_batch(const std::vector<VolumeSample>& data,
                                              const TrainConfig& cfg, int64_t iter);

// One optimization step over a batch: forward all stages, combined loss J,
// prototype momentum updates, backward, SGD step. Throws NumericError with a
// report dump if J is non-finite.
StepReport train_step(TrainState& state, const std::vector<const VolumeSample*>& batch);

using StepCallback = std::function<void(const StepReport&)>;
void train_loop(TrainState& state, const std::vector<VolumeSample>& train_data, int64_t iters,
                const StepCallback& on_step = nullptr);

// Malignancy probability for one volume (inference path: predicted context
// probabilities feed the tokenizer). ensemble averages available heads.
double predict(const TrainState& state, const VolumeSample& sample, bool ensemble);

// Full evaluation of a sample list: per-head scores, diameter-stratified AUC,
// mean per-class Dice over masked samples.
EvalReport evaluate(const TrainState& state, const std::vector<VolumeSample>& samples,
                    bool ensemble = true);

// Scores only (one per sample), using the arm's scoring rule.
std::vector<double> score_samples(const TrainState& state,
                                  const std::vector<VolumeSample>& samples, bool ensemble);

}  // namespace pare
