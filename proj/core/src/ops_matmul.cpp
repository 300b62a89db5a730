#include "pare/ops.hpp"

namespace pare {
namespace detail {

// C[m,n] += A op B with row-major buffers and explicit leading dims.
// Loop orders keep the innermost axis contiguous so the compiler vectorizes.
void gemm_nn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n,
             int64_t lda, int64_t ldb, int64_t ldc) {
  for (int64_t i = 0; i < m; ++i) {
    real* ci = c + i * ldc;
    const real* ai = a + i * lda;
    for (int64_t t = 0; t < k; ++t) {
      const real av = ai[t];
      const real* bt = b + t * ldb;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

void gemm_nt(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n,
             int64_t lda, int64_t ldb, int64_t ldc) {
  // B is [n, k]; C[i,j] = dot(A[i,:], B[j,:])
  for (int64_t i = 0; i < m; ++i) {
    const real* ai = a + i * lda;
    real* ci = c + i * ldc;
    for (int64_t j = 0; j < n; ++j) {
      const real* bj = b + j * ldb;
      real acc = 0;
      for (int64_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] += acc;
    }
  }
}

void gemm_tn(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n,
             int64_t lda, int64_t ldb, int64_t ldc) {
  // A is [k, m]; C[i,:] += A[t,i] * B[t,:]
  for (int64_t t = 0; t < k; ++t) {
    const real* at = a + t * lda;
    const real* bt = b + t * ldb;
    for (int64_t i = 0; i < m; ++i) {
      const real av = at[i];
      real* ci = c + i * ldc;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

void gemm_tt(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n,
             int64_t lda, int64_t ldb, int64_t ldc) {
  // A is [k, m], B is [n, k]
  for (int64_t i = 0; i < m; ++i) {
    real* ci = c + i * ldc;
    for (int64_t j = 0; j < n; ++j) {
      const real* bj = b + j * ldb;
      real acc = 0;
      for (int64_t t = 0; t < k; ++t) acc += a[t * lda + i] * bj[t];
      ci[j] += acc;
    }
  }
}

void gemm(const real* a, const real* b, real* c, int64_t m, int64_t k, int64_t n, bool ta,
          bool tb, int64_t lda, int64_t ldb, int64_t ldc) {
  if (!ta && !tb) gemm_nn(a, b, c, m, k, n, lda, ldb, ldc);
  else if (!ta && tb) gemm_nt(a, b, c, m, k, n, lda, ldb, ldc);
  else if (ta && !tb) gemm_tn(a, b, c, m, k, n, lda, ldb, ldc);
  else gemm_tt(a, b, c, m, k, n, lda, ldb, ldc);
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw TensorError("matmul: expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const int64_t m = trans_a ? a.dim(1) : a.dim(0);
  const int64_t ka = trans_a ? a.dim(0) : a.dim(1);
  const int64_t kb = trans_b ? b.dim(1) : b.dim(0);
  const int64_t n = trans_b ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw TensorError("matmul: inner dims disagree, " + shape_str(a.shape()) +
                      (trans_a ? "^T" : "") + " x " + shape_str(b.shape()) +
                      (trans_b ? "^T" : ""));
  }
  Tensor out(Shape{m, n});
  detail::gemm(a.data().data(), b.data().data(), out.data().data(), m, ka, n, trans_a, trans_b,
               a.dim(1), b.dim(1), n);
  detail::check_finite(out, "matmul");

  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    const int64_t k = ka;
    Graph::active()->record([ac, bc, oc, trans_a, trans_b, m, k, n]() mutable {
      const real* go = oc.grad().data();
      // dA and dB for each transpose combination, written as gemms whose
      // output matches A/B's stored (untransposed) layout.
      if (ac.requires_grad()) {
        real* ga = ac.grad().data();
        const real* bd = bc.data().data();
        if (!trans_a && !trans_b)       // dA[m,k] = dC · B^T
          detail::gemm_nt(go, bd, ga, m, n, k, n, bc.dim(1), ac.dim(1));
        else if (!trans_a && trans_b)   // dA[m,k] = dC · B
          detail::gemm_nn(go, bd, ga, m, n, k, n, bc.dim(1), ac.dim(1));
        else if (trans_a && !trans_b)   // A stored [k,m]: dA = B · dC^T
          detail::gemm_nt(bd, go, ga, k, n, m, bc.dim(1), n, ac.dim(1));
        else                            // A stored [k,m]: dA = B^T · dC^T
          detail::gemm_tt(bd, go, ga, k, n, m, bc.dim(1), n, ac.dim(1));
      }
      if (bc.requires_grad()) {
        real* gb = bc.grad().data();
        const real* ad = ac.data().data();
        if (!trans_a && !trans_b)       // dB[k,n] = A^T · dC
          detail::gemm_tn(ad, go, gb, k, m, n, ac.dim(1), n, bc.dim(1));
        else if (!trans_a && trans_b)   // B stored [n,k]: dB = dC^T · A
          detail::gemm_tn(go, ad, gb, n, m, k, n, ac.dim(1), bc.dim(1));
        else if (trans_a && !trans_b)   // dB[k,n] = A · dC  (A stored [k,m])
          detail::gemm_nn(ad, go, gb, k, m, n, ac.dim(1), n, bc.dim(1));
        else                            // B stored [n,k]: dB = dC^T · A^T
          detail::gemm_tt(go, ad, gb, n, m, k, n, ac.dim(1), bc.dim(1));
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  if (!b.defined()) return y;
  return add_rowwise(y, b);
}

}  // namespace pare
