#ifndef CEVAE_OPS_HPP_
#define CEVAE_OPS_HPP_

#include "cevae/autograd.hpp"

namespace cevae::ops {

// --- elementwise (numpy-style right-aligned broadcasting) ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var exp(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var leaky_relu(const Var& a, double slope);
inline Var swish(const Var& a) { return mul(a, sigmoid(a)); }
inline Var square(const Var& a) { return mul(a, a); }

// --- reductions / normalization ---
Var reduce_sum(const Var& a, const std::vector<int>& axes, bool keepdims);
Var reduce_mean(const Var& a, const std::vector<int>& axes, bool keepdims);
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var softmax(const Var& a, int axis);

// --- shape manipulation ---
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<int>& perm);
Var slice(const Var& a, const std::vector<int>& starts, const std::vector<int>& sizes);

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);           // (M,K)x(K,N)
Var bmm(const Var& a, const Var& b);              // (B,M,K)x(B,K,N)

// --- convolution family; x is (N,C,H,W) ---
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample_nearest2x(const Var& x);

// Per-pair capsule affine map: u (N,I,Cu,P), w (I,J,Ch,Cu) -> (N,J,I,Ch,P).
Var capsule_predict(const Var& u, const Var& w);

// Raw gemm used by oracles/tests as well: C = alpha*op(A)op(B) + beta*C, row-major.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

}  // namespace cevae::ops

#endif  // CEVAE_OPS_HPP_
