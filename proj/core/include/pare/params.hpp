#pragma once

#include <map>
#include <string>
#include <vector>

#include "pare/rng.hpp"
#include "pare/tensor.hpp"

namespace pare {

// Named trainable tensors. std::map keeps iteration order stable, which makes
// optimizer sweeps and checkpoints deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  int64_t total_scalars() const;

  void zero_grads();
  double grad_norm() const;           // global L2 over all grads
  void clip_grads(double max_norm);   // rescale if norm exceeds max_norm

 private:
  std::map<std::string, Tensor> params_;
};

// SGD with classical momentum: v <- momentum*v + g; p <- p - lr*v.
// In strict mode a trainable parameter without a gradient is an error;
// otherwise it is skipped (its velocity still decays).
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}

  void step(ParamStore& params, double lr, bool strict = false);

  double momentum() const { return momentum_; }
  std::map<std::string, std::vector<real>>& velocity() { return velocity_; }
  const std::map<std::string, std::vector<real>>& velocity() const { return velocity_; }

 private:
  double momentum_;
  std::map<std::string, std::vector<real>> velocity_;
};

// Linear warmup over the first warmup_frac of total iterations, then cosine
// decay to zero.
double lr_schedule(int64_t iter, int64_t total_iters, double base_lr, double warmup_frac);

// ---- initializers ----------------------------------------------------------
Tensor he_normal(Shape shape, int64_t fan_in, Rng& rng);
Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng);
Tensor trunc_normal_02(Shape shape, Rng& rng);  // N(0, 0.02), clipped at 2 sd

}  // namespace pare
