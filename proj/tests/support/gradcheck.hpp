#pragma once

// Finite-difference oracles for gradient verification. These run against the
// engine under test but compute their expected values independently (central
// differences of the scalar loss), so they stay valid whatever the backward
// implementation does.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pare/rng.hpp"
#include "pare/tensor.hpp"

namespace pare::testing {

#ifdef PARE_SCALAR_F64
inline constexpr double kFdEps = 1e-5;
inline constexpr double kFdTol = 1e-5;
#else
inline constexpr double kFdEps = 1e-3;
inline constexpr double kFdTol = 1e-2;
#endif

// Relative error with a floor so near-zero pairs compare absolutely.
inline double rel_err(double a, double b, double floor_val = 10 * kFdTol * kFdEps) {
  const double denom = std::max({std::abs(a), std::abs(b), floor_val});
  return std::abs(a - b) / denom;
}

struct GradCheckResult {
  double max_rel_err = 0;
  int64_t checked = 0;
  std::string worst;  // description of the worst coordinate
  bool ok(double tol = kFdTol) const { return checked > 0 && max_rel_err < tol; }
};

// loss() must rebuild the graph from `inputs` each call (define-by-run).
// Checks every coordinate of every listed input against central differences.
inline GradCheckResult grad_check_coords(const std::function<double()>& loss,
                                         std::vector<Tensor> inputs,
                                         std::vector<std::vector<real>> analytic) {
  GradCheckResult res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto vals = inputs[t].data();
    for (int64_t i = 0; i < inputs[t].numel(); ++i) {
      const real keep = vals[i];
      vals[i] = keep + static_cast<real>(kFdEps);
      const double up = loss();
      vals[i] = keep - static_cast<real>(kFdEps);
      const double down = loss();
      vals[i] = keep;
      const double fd = (up - down) / (2 * kFdEps);
      const double an = static_cast<double>(analytic[t][static_cast<std::size_t>(i)]);
      const double e = rel_err(an, fd);
      ++res.checked;
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst = "input " + std::to_string(t) + " coord " + std::to_string(i) +
                    ": analytic=" + std::to_string(an) + " fd=" + std::to_string(fd);
      }
    }
  }
  return res;
}

// Directional probe: compares grad.v against the central difference of the
// loss along a random unit direction v. Aggregates the whole gradient into
// one well-conditioned scalar, which is what float32 can actually resolve.
inline GradCheckResult grad_check_directional(const std::function<double()>& loss,
                                              std::vector<Tensor> inputs,
                                              std::vector<std::vector<real>> analytic,
                                              Rng& rng, int probes_per_tensor = 3) {
  GradCheckResult res;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto vals = inputs[t].data();
    const int64_t n = inputs[t].numel();
    for (int p = 0; p < probes_per_tensor; ++p) {
      std::vector<double> dir(static_cast<std::size_t>(n));
      double norm = 0;
      for (auto& d : dir) {
        d = rng.normal();
        norm += d * d;
      }
      norm = std::sqrt(norm);
      for (auto& d : dir) d /= norm;

      std::vector<real> keep(vals.begin(), vals.end());
      for (int64_t i = 0; i < n; ++i)
        vals[i] = keep[std::size_t(i)] + static_cast<real>(kFdEps * dir[std::size_t(i)]);
      const double up = loss();
      for (int64_t i = 0; i < n; ++i)
        vals[i] = keep[std::size_t(i)] - static_cast<real>(kFdEps * dir[std::size_t(i)]);
      const double down = loss();
      for (int64_t i = 0; i < n; ++i) vals[i] = keep[std::size_t(i)];

      const double fd = (up - down) / (2 * kFdEps);
      double an = 0;
      for (int64_t i = 0; i < n; ++i)
        an += static_cast<double>(analytic[t][std::size_t(i)]) * dir[std::size_t(i)];
      const double e = rel_err(an, fd, 5e-4);
      ++res.checked;
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst = "input " + std::to_string(t) + " probe " + std::to_string(p) +
                    ": analytic=" + std::to_string(an) + " fd=" + std::to_string(fd);
      }
    }
  }
  return res;
}

// Runs loss_fn once under a fresh tape, sweeps backward, and returns the
// captured gradients of `inputs` (which must have requires_grad set).
inline std::vector<std::vector<real>> backward_grads(
    const std::function<Tensor()>& loss_fn, std::vector<Tensor>& inputs) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  AutogradScope tape;
  Tensor loss = loss_fn();
  tape.graph().backward(loss);
  std::vector<std::vector<real>> out;
  for (Tensor& t : inputs) {
    auto g = t.grad();
    out.emplace_back(g.begin(), g.end());
  }
  return out;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(shape));
  fill_normal(t, rng, sd);
  return t;
}

}  // namespace pare::testing
