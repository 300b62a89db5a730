#include "pare/params.hpp"

#include <cmath>

namespace pare {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw TensorError("param '" + name + "' already registered");
  t.set_requires_grad(true);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("unknown param '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw TensorError("unknown param '" + name + "'");
  return it->second;
}

int64_t ParamStore::total_scalars() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

double ParamStore::grad_norm() const {
  double acc = 0;
  for (const auto& [name, t] : params_) {
    for (real g : t.grad()) acc += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(acc);
}

void ParamStore::clip_grads(double max_norm) {
  if (max_norm <= 0) return;
  const double norm = grad_norm();
  if (norm <= max_norm) return;
  const real s = static_cast<real>(max_norm / norm);
  for (auto& [name, t] : params_) {
    if (!t.has_grad()) continue;
    for (real& g : t.grad()) g *= s;
  }
}

void SgdMomentum::step(ParamStore& params, double lr, bool strict) {
  for (auto& [name, p] : params.all()) {
    auto& v = velocity_[name];
    if (v.empty()) v.assign(static_cast<std::size_t>(p.numel()), real(0));
    const bool has_g = p.has_grad();
    if (!has_g && strict) {
      throw TensorError("sgd_step: missing gradient for trainable param '" + name + "'");
    }
    auto pd = p.data();
    const real m = static_cast<real>(momentum_);
    const real step_lr = static_cast<real>(lr);
    if (has_g) {
      auto gd = p.grad();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = m * v[i] + gd[i];
        pd[i] -= step_lr * v[i];
      }
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = m * v[i];
        pd[i] -= step_lr * v[i];
      }
    }
  }
}

double lr_schedule(int64_t iter, int64_t total_iters, double base_lr, double warmup_frac) {
  if (total_iters <= 0) return base_lr;
  const int64_t warm = std::max<int64_t>(1, static_cast<int64_t>(warmup_frac * total_iters));
  if (iter < warm) return base_lr * static_cast<double>(iter + 1) / static_cast<double>(warm);
  const double t = static_cast<double>(iter - warm) / static_cast<double>(std::max<int64_t>(1, total_iters - warm));
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, t)));
}

Tensor he_normal(Shape shape, int64_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  fill_normal(t, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
  return t;
}

Tensor xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  fill_uniform(t, rng, -bound, bound);
  return t;
}

Tensor trunc_normal_02(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (real& x : t.data()) {
    double v = rng.normal(0.0, 0.02);
    while (std::abs(v) > 0.04) v = rng.normal(0.0, 0.02);
    x = static_cast<real>(v);
  }
  return t;
}

}  // namespace pare
