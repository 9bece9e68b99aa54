#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace mga {

// Every primitive used by the model comes as a forward function plus a
// vector-Jacobian product so the training loop can compose gradients by
// hand. All functions validate finiteness at entry and reject NaN/Inf.

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// returns (d_a, d_b) for cotangent shaped like the output
std::pair<Tensor, Tensor> matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& cot);

// a * b^T and a^T * b, used where the transposed factor already exists
// (attention scores, similarity grids). Gradients route through matmul_vjp
// compositions at the call sites.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Softmax over a vector: y = softmax(scale * x), stabilized by max shift
// ---------------------------------------------------------------------------
Tensor softmax(const Tensor& x, double scale = 1.0);
// vjp expressed through the forward output y
Tensor softmax_vjp(const Tensor& y, const Tensor& cot, double scale = 1.0);

// ---------------------------------------------------------------------------
// Sparsemax: Euclidean projection onto the probability simplex
// ---------------------------------------------------------------------------
struct SparsemaxResult {
  Tensor p;                  // projection, sums to 1, >= 0
  std::vector<int> support;  // indices with p_i > 0
  double tau = 0.0;          // threshold: p_i = max(x_i - tau, 0)
  double boundary_margin = 0.0;  // min_i |x_i - tau|; small => near support change
};
SparsemaxResult sparsemax_full(const Tensor& x);
Tensor sparsemax(const Tensor& x);
// g_i = cot_i - mean_{j in S}(cot_j) on the support, 0 elsewhere
Tensor sparsemax_vjp(const std::vector<int>& support, const Tensor& cot);

// ---------------------------------------------------------------------------
// Max over the rows of a column vector (ties break to the lowest index)
// ---------------------------------------------------------------------------
struct MaxResult {
  double value = 0.0;
  int argmax = 0;
};
MaxResult max_over_rows(const Tensor& x);
Tensor max_over_rows_vjp(int n, int argmax, double cot);

// ---------------------------------------------------------------------------
// LayerNorm over a vector with affine gain/bias
// ---------------------------------------------------------------------------
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
struct LayernormGrads {
  Tensor d_x, d_gain, d_bias;
};
LayernormGrads layernorm_vjp(const Tensor& x, const Tensor& gain, const Tensor& bias,
                             double eps, const Tensor& cot);

// ---------------------------------------------------------------------------
// Elementwise / plumbing ops
// ---------------------------------------------------------------------------
Tensor gelu(const Tensor& x);                          // exact erf form
Tensor gelu_vjp(const Tensor& x, const Tensor& cot);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

Tensor l2_normalize(const Tensor& x);                  // throws on near-zero norm
Tensor l2_normalize_vjp(const Tensor& x, const Tensor& cot);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor transpose(const Tensor& a);

Tensor embed_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor embed_lookup_vjp(const Tensor& table, const std::vector<int>& ids, const Tensor& cot);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------
// A differentiable operation bundled with its vjp, in the form the checker
// consumes: forward maps inputs to one output tensor; vjp maps (inputs,
// output-cotangent) to one cotangent per input.
struct DualOp {
  std::string name;
  std::function<Tensor(const std::vector<Tensor>&)> forward;
  std::function<std::vector<Tensor>(const std::vector<Tensor>&, const Tensor&)> vjp;
};

// Central finite differences of <cot, f(x)> against the analytic vjp; returns
// the worst mixed relative error |g - d| / max(1, |g|, |d|) over all entries
// of all inputs. `step` defaults to 1e-5.
double grad_check(const DualOp& op, const std::vector<Tensor>& inputs,
                  const Tensor& cotangent, double step = 1e-5);

}  // namespace mga
