#include <cmath>

#include "pare/ops.hpp"

namespace pare {
namespace {

int normalize_axis(const char* op, const Tensor& x, int axis) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw TensorError(std::string(op) + ": axis out of range for " + shape_str(x.shape()));
  }
  return axis;
}

// outer/inner strides around one axis of a row-major tensor
struct AxisSplit {
  int64_t outer, n, inner;
};

AxisSplit split(const Shape& s, int axis) {
  AxisSplit a{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) a.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw TensorError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                      shape_str(new_shape));
  }
  Tensor out(new_shape, std::vector<real>(x.data().begin(), x.data().end()));
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc]() mutable {
      auto og = oc.grad();
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += og[i];
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw TensorError("concat: empty input list");
  const int ax = normalize_axis("concat", xs[0], axis);
  Shape out_shape = xs[0].shape();
  int64_t total = 0;
  for (const Tensor& t : xs) {
    if (t.rank() != xs[0].rank()) {
      throw TensorError("concat: rank mismatch " + shape_str(t.shape()) + " vs " +
                        shape_str(xs[0].shape()));
    }
    for (int i = 0; i < t.rank(); ++i) {
      if (i != ax && t.dim(i) != xs[0].dim(i)) {
        throw TensorError("concat: shape mismatch off-axis " + shape_str(t.shape()) + " vs " +
                          shape_str(xs[0].shape()));
      }
    }
    total += t.dim(ax);
  }
  out_shape[static_cast<std::size_t>(ax)] = total;
  Tensor out(out_shape);
  const AxisSplit os = split(out_shape, ax);
  auto od = out.data();

  int64_t offset = 0;  // running position along the axis
  for (const Tensor& t : xs) {
    const AxisSplit ts = split(t.shape(), ax);
    auto td = t.data();
    for (int64_t o = 0; o < ts.outer; ++o)
      for (int64_t j = 0; j < ts.n; ++j) {
        const real* src = td.data() + (o * ts.n + j) * ts.inner;
        real* dst = od.data() + (o * os.n + offset + j) * os.inner;
        for (int64_t i = 0; i < ts.inner; ++i) dst[i] = src[i];
      }
    offset += ts.n;
  }
  detail::check_finite(out, "concat");

  bool any_grad = false;
  for (const Tensor& t : xs)
    if (t.requires_grad()) any_grad = true;
  if (Graph::active() && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs = xs;
    Tensor oc = out;
    Graph::active()->record([inputs, oc, ax]() mutable {
      const AxisSplit os2 = split(oc.shape(), ax);
      auto og = oc.grad();
      int64_t offset2 = 0;
      for (Tensor& t : inputs) {
        const AxisSplit ts = split(t.shape(), ax);
        if (t.requires_grad()) {
          auto g = t.grad();
          for (int64_t o = 0; o < ts.outer; ++o)
            for (int64_t j = 0; j < ts.n; ++j) {
              const real* src = og.data() + (o * os2.n + offset2 + j) * os2.inner;
              real* dst = g.data() + (o * ts.n + j) * ts.inner;
              for (int64_t i = 0; i < ts.inner; ++i) dst[i] += src[i];
            }
        }
        offset2 += ts.n;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  const int ax = normalize_axis("slice", x, axis);
  if (start < 0 || len <= 0 || start + len > x.dim(ax)) {
    throw TensorError("slice: range [" + std::to_string(start) + ", " +
                      std::to_string(start + len) + ") out of bounds for axis " +
                      std::to_string(ax) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(ax)] = len;
  Tensor out(out_shape);
  const AxisSplit xs = split(x.shape(), ax);
  auto xd = x.data();
  auto od = out.data();
  for (int64_t o = 0; o < xs.outer; ++o)
    for (int64_t j = 0; j < len; ++j) {
      const real* src = xd.data() + (o * xs.n + start + j) * xs.inner;
      real* dst = od.data() + (o * len + j) * xs.inner;
      for (int64_t i = 0; i < xs.inner; ++i) dst[i] = src[i];
    }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc, ax, start, len]() mutable {
      const AxisSplit xs2 = split(xc.shape(), ax);
      auto og = oc.grad();
      auto g = xc.grad();
      for (int64_t o = 0; o < xs2.outer; ++o)
        for (int64_t j = 0; j < len; ++j) {
          const real* src = og.data() + (o * len + j) * xs2.inner;
          real* dst = g.data() + (o * xs2.n + start + j) * xs2.inner;
          for (int64_t i = 0; i < xs2.inner; ++i) dst[i] += src[i];
        }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const int ax = normalize_axis("softmax", x, axis);
  const AxisSplit s = split(x.shape(), ax);
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (int64_t o = 0; o < s.outer; ++o)
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.n * s.inner + i;
      real mx = xd[base];
      for (int64_t j = 1; j < s.n; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      real sum = 0;
      for (int64_t j = 0; j < s.n; ++j) {
        real e = std::exp(xd[base + j * s.inner] - mx);
        od[base + j * s.inner] = e;
        sum += e;
      }
      const real inv = real(1) / sum;
      for (int64_t j = 0; j < s.n; ++j) od[base + j * s.inner] *= inv;
    }
  detail::check_finite(out, "softmax");
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc, s]() mutable {
      auto og = oc.grad();
      auto p = oc.data();
      auto g = xc.grad();
      for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
          const int64_t base = o * s.n * s.inner + i;
          real dot = 0;
          for (int64_t j = 0; j < s.n; ++j) dot += og[base + j * s.inner] * p[base + j * s.inner];
          for (int64_t j = 0; j < s.n; ++j) {
            const int64_t k = base + j * s.inner;
            g[k] += p[k] * (og[k] - dot);
          }
        }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, real eps) {
  const int64_t d = x.dim(-1);
  const int64_t rows = x.numel() / d;
  Tensor out(x.shape());
  std::vector<real> inv_std(static_cast<std::size_t>(rows));
  auto xd = x.data();
  auto od = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const real* xr = xd.data() + r * d;
    real* yr = od.data() + r * d;
    real mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += xr[j];
    mean /= real(d);
    real var = 0;
    for (int64_t j = 0; j < d; ++j) {
      real c = xr[j] - mean;
      var += c * c;
    }
    var /= real(d);
    const real istd = real(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = istd;
    for (int64_t j = 0; j < d; ++j) yr[j] = (xr[j] - mean) * istd;
  }
  detail::check_finite(out, "layer_norm");
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc, inv_std, rows, d]() mutable {
      auto og = oc.grad();
      auto y = oc.data();
      auto g = xc.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const real* gr = og.data() + r * d;
        const real* yr = y.data() + r * d;
        real* dst = g.data() + r * d;
        real mean_g = 0, mean_gy = 0;
        for (int64_t j = 0; j < d; ++j) {
          mean_g += gr[j];
          mean_gy += gr[j] * yr[j];
        }
        mean_g /= real(d);
        mean_gy /= real(d);
        const real istd = inv_std[static_cast<std::size_t>(r)];
        for (int64_t j = 0; j < d; ++j) dst[j] += istd * (gr[j] - mean_g - yr[j] * mean_gy);
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  double acc = 0;
  for (real v : x.data()) acc += static_cast<double>(v);
  Tensor out = Tensor::scalar(static_cast<real>(acc));
  detail::check_finite(out, "sum_all");
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc]() mutable {
      const real go = oc.grad()[0];
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  double acc = 0;
  for (real v : x.data()) acc += static_cast<double>(v);
  const int64_t n = x.numel();
  Tensor out = Tensor::scalar(static_cast<real>(acc / static_cast<double>(n)));
  detail::check_finite(out, "mean_all");
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc, n]() mutable {
      const real go = oc.grad()[0] / real(n);
      auto g = xc.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
    });
  }
  return out;
}

Tensor sum_axis(const Tensor& x, int axis) {
  const int ax = normalize_axis("sum_axis", x, axis);
  const AxisSplit s = split(x.shape(), ax);
  Shape out_shape;
  for (int i = 0; i < x.rank(); ++i)
    if (i != ax) out_shape.push_back(x.dim(i));
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  auto xd = x.data();
  auto od = out.data();
  for (int64_t o = 0; o < s.outer; ++o)
    for (int64_t i = 0; i < s.inner; ++i) {
      double acc = 0;
      for (int64_t j = 0; j < s.n; ++j)
        acc += static_cast<double>(xd[(o * s.n + j) * s.inner + i]);
      od[o * s.inner + i] = static_cast<real>(acc);
    }
  detail::check_finite(out, "sum_axis");
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    Graph::active()->record([xc, oc, s]() mutable {
      auto og = oc.grad();
      auto g = xc.grad();
      for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t i = 0; i < s.inner; ++i) {
          const real go = og[o * s.inner + i];
          for (int64_t j = 0; j < s.n; ++j) g[(o * s.n + j) * s.inner + i] += go;
        }
    });
  }
  return out;
}

Tensor mean_axis(const Tensor& x, int axis) {
  const int ax = normalize_axis("mean_axis", x, axis);
  const real inv = real(1) / real(x.dim(ax));
  return scale(sum_axis(x, ax), inv);
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<uint8_t>& labels) {
  if (logits.rank() != 2) {
    throw TensorError("cross_entropy_logits: expects [C, V] logits, got " +
                      shape_str(logits.shape()));
  }
  const int64_t c = logits.dim(0);
  const int64_t v = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != v) {
    throw TensorError("cross_entropy_logits: " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(v) + " lanes");
  }
  for (uint8_t y : labels) {
    if (y >= c) {
      throw TensorError("cross_entropy_logits: label " + std::to_string(int(y)) +
                        " outside 0.." + std::to_string(c - 1));
    }
  }
  auto ld = logits.data();
  double total = 0;
  for (int64_t i = 0; i < v; ++i) {
    real mx = ld[i];
    for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, ld[ch * v + i]);
    double sum = 0;
    for (int64_t ch = 0; ch < c; ++ch) sum += std::exp(static_cast<double>(ld[ch * v + i] - mx));
    const double lse = static_cast<double>(mx) + std::log(sum);
    total += lse - static_cast<double>(ld[labels[static_cast<std::size_t>(i)] * v + i]);
  }
  Tensor out = Tensor::scalar(static_cast<real>(total / static_cast<double>(v)));
  detail::check_finite(out, "cross_entropy_logits");
  if (detail::tracing({&logits})) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    std::vector<uint8_t> ycopy = labels;
    Graph::active()->record([lc, oc, ycopy, c, v]() mutable {
      const real go = oc.grad()[0] / real(v);
      auto ld2 = lc.data();
      auto g = lc.grad();
      for (int64_t i = 0; i < v; ++i) {
        real mx = ld2[i];
        for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, ld2[ch * v + i]);
        real sum = 0;
        for (int64_t ch = 0; ch < c; ++ch) sum += std::exp(ld2[ch * v + i] - mx);
        const real inv = real(1) / sum;
        for (int64_t ch = 0; ch < c; ++ch) {
          const real p = std::exp(ld2[ch * v + i] - mx) * inv;
          const real onehot = (ch == ycopy[static_cast<std::size_t>(i)]) ? real(1) : real(0);
          g[ch * v + i] += go * (p - onehot);
        }
      }
    });
  }
  return out;
}

}  // namespace pare
