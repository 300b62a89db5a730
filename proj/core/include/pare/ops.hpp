#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pare/tensor.hpp"

namespace pare {

// Dense op set for the model graph. Every op returns a fresh tensor and, when
// a tape is active and any input requires grad, records its adjoint closure.

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_scalar(const Tensor& a, real c);
Tensor gelu(const Tensor& a);  // exact erf form

// Broadcast over the last axis: x[..., j] (+|*) v[j].
Tensor add_rowwise(const Tensor& x, const Tensor& v);
Tensor mul_rowwise(const Tensor& x, const Tensor& v);
// Broadcast over the first axis: x[c, ...] (+|*) v[c].
Tensor add_chanwise(const Tensor& x, const Tensor& v);
Tensor mul_chanwise(const Tensor& x, const Tensor& v);

// ---- linear algebra --------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x·w + b

// ---- shape -----------------------------------------------------------------
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);

// ---- normalization / reductions --------------------------------------------
Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, real eps = real(1e-5));  // last axis, no affine
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);   // reduces (drops) the axis
Tensor mean_axis(const Tensor& x, int axis);

// ---- 3D convolution --------------------------------------------------------
// x [Cin, Z, Y, X], w [Cout, Cin, kz, ky, kx], bias [Cout] or undefined.
// Zero padding, one stride for all spatial axes.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// x [Cin, Z, Y, X], w [Cin, Cout, kz, ky, kx]; out dim = (in-1)*stride + k.
Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride);
// Mean over spatial dims: [C, Z, Y, X] -> [C].
Tensor global_avg_pool(const Tensor& x);
// Overlapped patch extraction: [C, Z, Y, X] -> [g, C*wz*wy*wx], one row per
// window position (z-major order). Requires (dim - window) % stride == 0.
Tensor extract_windows(const Tensor& x, std::array<int, 3> window, std::array<int, 3> stride);
int64_t window_count(const Shape& spatial, std::array<int, 3> window, std::array<int, 3> stride);

// ---- losses ----------------------------------------------------------------
// logits [C, V], labels[v] in 0..C-1; mean over the V lanes of
// -log softmax(logits[:, v])[labels[v]]. Stable log-sum-exp, double accumulation.
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<uint8_t>& labels);

}  // namespace pare
