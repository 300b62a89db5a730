#include <cmath>

#include "pare/ops.hpp"

namespace pare {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
}

void require_last_dim(const char* op, const Tensor& x, const Tensor& v) {
  if (v.rank() != 1 || v.dim(0) != x.dim(-1)) {
    throw TensorError(std::string(op) + ": vector " + shape_str(v.shape()) +
                      " does not match last axis of " + shape_str(x.shape()));
  }
}

void require_first_dim(const char* op, const Tensor& x, const Tensor& v) {
  if (v.rank() != 1 || v.dim(0) != x.dim(0)) {
    throw TensorError(std::string(op) + ": vector " + shape_str(v.shape()) +
                      " does not match first axis of " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
  detail::check_finite(out, "add");
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Graph::active()->record([ac, bc, oc]() mutable {
      auto og = oc.grad();
      if (ac.requires_grad()) {
        auto g = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (bc.requires_grad()) {
        auto g = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
  detail::check_finite(out, "sub");
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Graph::active()->record([ac, bc, oc]() mutable {
      auto og = oc.grad();
      if (ac.requires_grad()) {
        auto g = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (bc.requires_grad()) {
        auto g = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= og[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  detail::check_finite(out, "mul");
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Graph::active()->record([ac, bc, oc]() mutable {
      auto og = oc.grad();
      auto ad2 = ac.data(), bd2 = bc.data();
      if (ac.requires_grad()) {
        auto g = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * bd2[i];
      }
      if (bc.requires_grad()) {
        auto g = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * ad2[i];
      }
    });
  }
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] / bd[i];
  detail::check_finite(out, "div");
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    Graph::active()->record([ac, bc, oc]() mutable {
      auto og = oc.grad();
      auto ad2 = ac.data(), bd2 = bc.data();
      if (ac.requires_grad()) {
        auto g = ac.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] / bd2[i];
      }
      if (bc.requires_grad()) {
        auto g = bc.grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] -= og[i] * ad2[i] / (bd2[i] * bd2[i]);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, real c) {
  Tensor out(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * c;
  detail::check_finite(out, "scale");
  if (detail::tracing({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Graph::active()->record([ac, oc, c]() mutable {
      auto og = oc.grad();
      auto g = ac.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i] * c;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, real c) {
  Tensor out(a.shape());
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + c;
  detail::check_finite(out, "add_scalar");
  if (detail::tracing({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Graph::active()->record([ac, oc]() mutable {
      auto og = oc.grad();
      auto g = ac.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    });
  }
  return out;
}

Tensor gelu(const Tensor& a) {
  Tensor out(a.shape());
  auto ad = a.data();
  auto od = out.data();
  const real inv_sqrt2 = real(0.7071067811865475);
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = real(0.5) * ad[i] * (real(1) + std::erf(ad[i] * inv_sqrt2));
  }
  detail::check_finite(out, "gelu");
  if (detail::tracing({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    Graph::active()->record([ac, oc]() mutable {
      auto og = oc.grad();
      auto ad2 = ac.data();
      auto g = ac.grad();
      const real inv_sqrt2b = real(0.7071067811865475);
      const real inv_sqrt2pi = real(0.3989422804014327);
      for (std::size_t i = 0; i < g.size(); ++i) {
        real x = ad2[i];
        real cdf = real(0.5) * (real(1) + std::erf(x * inv_sqrt2b));
        real pdf = inv_sqrt2pi * std::exp(real(-0.5) * x * x);
        g[i] += og[i] * (cdf + x * pdf);
      }
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& v) {
  require_last_dim("add_rowwise", x, v);
  Tensor out(x.shape());
  const int64_t d = x.dim(-1);
  const int64_t rows = x.numel() / d;
  auto xd = x.data(), vd = v.data();
  auto od = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) od[r * d + j] = xd[r * d + j] + vd[j];
  detail::check_finite(out, "add_rowwise");
  if (detail::tracing({&x, &v})) {
    out.set_requires_grad(true);
    Tensor xc = x, vc = v, oc = out;
    Graph::active()->record([xc, vc, oc, rows, d]() mutable {
      auto og = oc.grad();
      if (xc.requires_grad()) {
        auto g = xc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (vc.requires_grad()) {
        auto g = vc.grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j) g[j] += og[r * d + j];
      }
    });
  }
  return out;
}

Tensor mul_rowwise(const Tensor& x, const Tensor& v) {
  require_last_dim("mul_rowwise", x, v);
  Tensor out(x.shape());
  const int64_t d = x.dim(-1);
  const int64_t rows = x.numel() / d;
  auto xd = x.data(), vd = v.data();
  auto od = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) od[r * d + j] = xd[r * d + j] * vd[j];
  detail::check_finite(out, "mul_rowwise");
  if (detail::tracing({&x, &v})) {
    out.set_requires_grad(true);
    Tensor xc = x, vc = v, oc = out;
    Graph::active()->record([xc, vc, oc, rows, d]() mutable {
      auto og = oc.grad();
      auto xd2 = xc.data(), vd2 = vc.data();
      if (xc.requires_grad()) {
        auto g = xc.grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j) g[r * d + j] += og[r * d + j] * vd2[j];
      }
      if (vc.requires_grad()) {
        auto g = vc.grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < d; ++j) g[j] += og[r * d + j] * xd2[r * d + j];
      }
    });
  }
  return out;
}

Tensor add_chanwise(const Tensor& x, const Tensor& v) {
  require_first_dim("add_chanwise", x, v);
  Tensor out(x.shape());
  const int64_t c = x.dim(0);
  const int64_t inner = x.numel() / c;
  auto xd = x.data(), vd = v.data();
  auto od = out.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < inner; ++i) od[ch * inner + i] = xd[ch * inner + i] + vd[ch];
  detail::check_finite(out, "add_chanwise");
  if (detail::tracing({&x, &v})) {
    out.set_requires_grad(true);
    Tensor xc = x, vc = v, oc = out;
    Graph::active()->record([xc, vc, oc, c, inner]() mutable {
      auto og = oc.grad();
      if (xc.requires_grad()) {
        auto g = xc.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
      }
      if (vc.requires_grad()) {
        auto g = vc.grad();
        for (int64_t ch = 0; ch < c; ++ch) {
          real acc = 0;
          for (int64_t i = 0; i < inner; ++i) acc += og[ch * inner + i];
          g[ch] += acc;
        }
      }
    });
  }
  return out;
}

Tensor mul_chanwise(const Tensor& x, const Tensor& v) {
  require_first_dim("mul_chanwise", x, v);
  Tensor out(x.shape());
  const int64_t c = x.dim(0);
  const int64_t inner = x.numel() / c;
  auto xd = x.data(), vd = v.data();
  auto od = out.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t i = 0; i < inner; ++i) od[ch * inner + i] = xd[ch * inner + i] * vd[ch];
  detail::check_finite(out, "mul_chanwise");
  if (detail::tracing({&x, &v})) {
    out.set_requires_grad(true);
    Tensor xc = x, vc = v, oc = out;
    Graph::active()->record([xc, vc, oc, c, inner]() mutable {
      auto og = oc.grad();
      auto xd2 = xc.data(), vd2 = vc.data();
      if (xc.requires_grad()) {
        auto g = xc.grad();
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t i = 0; i < inner; ++i) g[ch * inner + i] += og[ch * inner + i] * vd2[ch];
      }
      if (vc.requires_grad()) {
        auto g = vc.grad();
        for (int64_t ch = 0; ch < c; ++ch) {
          real acc = 0;
          for (int64_t i = 0; i < inner; ++i) acc += og[ch * inner + i] * xd2[ch * inner + i];
          g[ch] += acc;
        }
      }
    });
  }
  return out;
}

}  // namespace pare
