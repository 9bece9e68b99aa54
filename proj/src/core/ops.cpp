#include "core/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/errors.hpp"

namespace mga {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap as_mat(const Tensor& t) {
  if (t.ndim() != 2) throw DimensionError("expected a 2-D tensor, got " + t.shape_str());
  return CMap(t.data(), t.dim(0), t.dim(1));
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " * " +
                         b.shape_str());
  Tensor out({a.rows(), b.cols()});
  MMap(out.data(), out.rows(), out.cols()) = as_mat(a) * as_mat(b);
  return out;
}

std::pair<Tensor, Tensor> matmul_vjp(const Tensor& a, const Tensor& b, const Tensor& cot) {
  require_finite(cot, "matmul_vjp");
  if (cot.ndim() != 2 || cot.rows() != a.rows() || cot.cols() != b.cols())
    throw DimensionError("matmul_vjp: cotangent shape " + cot.shape_str());
  Tensor da({a.rows(), a.cols()});
  Tensor db({b.rows(), b.cols()});
  MMap(da.data(), da.rows(), da.cols()) = as_mat(cot) * as_mat(b).transpose();
  MMap(db.data(), db.rows(), db.cols()) = as_mat(a).transpose() * as_mat(cot);
  return {std::move(da), std::move(db)};
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_finite(a, "matmul_nt");
  require_finite(b, "matmul_nt");
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols())
    throw DimensionError("matmul_nt: incompatible shapes " + a.shape_str() + " * " +
                         b.shape_str() + "^T");
  Tensor out({a.rows(), b.rows()});
  MMap(out.data(), out.rows(), out.cols()) = as_mat(a) * as_mat(b).transpose();
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_finite(a, "matmul_tn");
  require_finite(b, "matmul_tn");
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows())
    throw DimensionError("matmul_tn: incompatible shapes " + a.shape_str() + "^T * " +
                         b.shape_str());
  Tensor out({a.cols(), b.cols()});
  MMap(out.data(), out.rows(), out.cols()) = as_mat(a).transpose() * as_mat(b);
  return out;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& x, double scale) {
  require_finite(x, "softmax");
  if (x.ndim() != 1 || x.dim(0) < 1) throw DimensionError("softmax: need a non-empty vector");
  if (!(scale > 0.0)) throw DegenerateInputError("softmax: scale must be positive");
  const int n = x.dim(0);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, scale * x.at(i));
  Tensor y({n});
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    y.at(i) = std::exp(scale * x.at(i) - mx);
    z += y.at(i);
  }
  for (int i = 0; i < n; ++i) y.at(i) /= z;
  return y;
}

Tensor softmax_vjp(const Tensor& y, const Tensor& cot, double scale) {
  require_same_shape(y, cot, "softmax_vjp");
  const int n = y.dim(0);
  const double inner = y.dot(cot);
  Tensor dx({n});
  for (int i = 0; i < n; ++i) dx.at(i) = scale * y.at(i) * (cot.at(i) - inner);
  return dx;
}

// ---------------------------------------------------------------------------
// sparsemax
// ---------------------------------------------------------------------------

SparsemaxResult sparsemax_full(const Tensor& x) {
  require_finite(x, "sparsemax");
  if (x.ndim() != 1 || x.dim(0) < 1)
    throw DimensionError("sparsemax: need a non-empty vector");
  const int n = x.dim(0);

  // Shift by the max first: keeps the arithmetic identical under exact
  // translations of the input, so shift invariance holds bit-for-bit whenever
  // x and x + c are exactly representable.
  double mx = x.at(0);
  for (int i = 1; i < n; ++i) mx = std::max(mx, x.at(i));
  std::vector<double> z(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) z[static_cast<size_t>(i)] = x.at(i) - mx;

  std::vector<double> sorted = z;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  // largest k with 1 + k*z_(k) > cumsum_k
  double cumsum = 0.0, cumsum_k = 0.0;
  int k_support = 0;
  for (int k = 1; k <= n; ++k) {
    cumsum += sorted[static_cast<size_t>(k - 1)];
    if (1.0 + k * sorted[static_cast<size_t>(k - 1)] > cumsum) {
      k_support = k;
      cumsum_k = cumsum;
    }
  }
  const double tau = (cumsum_k - 1.0) / k_support;

  SparsemaxResult res;
  res.p = Tensor({n});
  res.tau = tau + mx;
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double v = z[static_cast<size_t>(i)] - tau;
    margin = std::min(margin, std::fabs(v));
    if (v > 0.0) {
      res.p.at(i) = v;
      res.support.push_back(i);
    }
  }
  res.boundary_margin = margin;
  return res;
}

Tensor sparsemax(const Tensor& x) { return sparsemax_full(x).p; }

Tensor sparsemax_vjp(const std::vector<int>& support, const Tensor& cot) {
  require_finite(cot, "sparsemax_vjp");
  Tensor g({cot.dim(0)});
  if (support.empty()) throw DegenerateInputError("sparsemax_vjp: empty support");
  double mean = 0.0;
  for (int i : support) mean += cot.at(i);
  mean /= static_cast<double>(support.size());
  for (int i : support) g.at(i) = cot.at(i) - mean;
  return g;
}

// ---------------------------------------------------------------------------
// max over rows
// ---------------------------------------------------------------------------

MaxResult max_over_rows(const Tensor& x) {
  require_finite(x, "max_over_rows");
  int n = 0;
  if (x.ndim() == 1) {
    n = x.dim(0);
  } else if (x.ndim() == 2 && x.cols() == 1) {
    n = x.rows();
  } else {
    throw DimensionError("max_over_rows: need a vector or Tx1 tensor, got " + x.shape_str());
  }
  if (n < 1) throw DimensionError("max_over_rows: empty input");
  MaxResult res{x.data()[0], 0};
  for (int i = 1; i < n; ++i) {
    if (x.data()[i] > res.value) {
      res.value = x.data()[i];
      res.argmax = i;
    }
  }
  return res;
}

Tensor max_over_rows_vjp(int n, int argmax, double cot) {
  Tensor g({n});
  g.at(argmax) = cot;
  return g;
}

// ---------------------------------------------------------------------------
// layernorm
// ---------------------------------------------------------------------------

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_finite(x, "layernorm");
  require_same_shape(x, gain, "layernorm");
  require_same_shape(x, bias, "layernorm");
  if (x.ndim() != 1 || x.dim(0) < 2) throw DimensionError("layernorm: need n >= 2");
  if (!(eps > 0.0)) throw DegenerateInputError("layernorm: eps must be positive");
  const int n = x.dim(0);
  double mu = x.sum() / n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) var += (x.at(i) - mu) * (x.at(i) - mu);
  var /= n;
  const double sigma = std::sqrt(var + eps);
  Tensor y({n});
  for (int i = 0; i < n; ++i) y.at(i) = gain.at(i) * (x.at(i) - mu) / sigma + bias.at(i);
  return y;
}

LayernormGrads layernorm_vjp(const Tensor& x, const Tensor& gain, const Tensor& bias,
                             double eps, const Tensor& cot) {
  require_finite(cot, "layernorm_vjp");
  require_same_shape(x, cot, "layernorm_vjp");
  (void)bias;
  const int n = x.dim(0);
  double mu = x.sum() / n;
  double var = 0.0;
  for (int i = 0; i < n; ++i) var += (x.at(i) - mu) * (x.at(i) - mu);
  var /= n;
  const double sigma = std::sqrt(var + eps);

  LayernormGrads g{Tensor({n}), Tensor({n}), Tensor({n})};
  // dxhat_i = cot_i * gain_i; then the standard normalization backward
  double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
  std::vector<double> xhat(static_cast<size_t>(n)), dxhat(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    xhat[static_cast<size_t>(i)] = (x.at(i) - mu) / sigma;
    dxhat[static_cast<size_t>(i)] = cot.at(i) * gain.at(i);
    sum_dxhat += dxhat[static_cast<size_t>(i)];
    sum_dxhat_xhat += dxhat[static_cast<size_t>(i)] * xhat[static_cast<size_t>(i)];
  }
  for (int i = 0; i < n; ++i) {
    g.d_x.at(i) = (dxhat[static_cast<size_t>(i)] - sum_dxhat / n -
                   xhat[static_cast<size_t>(i)] * sum_dxhat_xhat / n) / sigma;
    g.d_gain.at(i) = cot.at(i) * xhat[static_cast<size_t>(i)];
    g.d_bias.at(i) = cot.at(i);
  }
  return g;
}

// ---------------------------------------------------------------------------
// gelu / l2_normalize / add / scale / embed_lookup
// ---------------------------------------------------------------------------

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad_scalar(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  const double Phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  return Phi + x * phi;
}

Tensor gelu(const Tensor& x) {
  require_finite(x, "gelu");
  Tensor y(x.shape());
  for (size_t i = 0; i < x.numel(); ++i) y.raw()[i] = gelu_scalar(x.raw()[i]);
  return y;
}

Tensor gelu_vjp(const Tensor& x, const Tensor& cot) {
  require_same_shape(x, cot, "gelu_vjp");
  Tensor g(x.shape());
  for (size_t i = 0; i < x.numel(); ++i)
    g.raw()[i] = cot.raw()[i] * gelu_grad_scalar(x.raw()[i]);
  return g;
}

Tensor l2_normalize(const Tensor& x) {
  require_finite(x, "l2_normalize");
  const double nrm = x.norm2();
  if (nrm < 1e-12)
    throw DegenerateInputError("l2_normalize: vector norm below 1e-12");
  Tensor y(x.shape());
  for (size_t i = 0; i < x.numel(); ++i) y.raw()[i] = x.raw()[i] / nrm;
  return y;
}

Tensor l2_normalize_vjp(const Tensor& x, const Tensor& cot) {
  require_same_shape(x, cot, "l2_normalize_vjp");
  const double nrm = x.norm2();
  if (nrm < 1e-12)
    throw DegenerateInputError("l2_normalize_vjp: vector norm below 1e-12");
  // d/dx (x/|x|) applied to cot: (cot - y <cot, y>) / |x|
  const double inv = 1.0 / nrm;
  double inner = 0.0;
  for (size_t i = 0; i < x.numel(); ++i) inner += cot.raw()[i] * x.raw()[i] * inv;
  Tensor g(x.shape());
  for (size_t i = 0; i < x.numel(); ++i)
    g.raw()[i] = (cot.raw()[i] - x.raw()[i] * inv * inner) * inv;
  return g;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_finite(a, "add");
  require_finite(b, "add");
  require_same_shape(a, b, "add");
  Tensor out = a;
  out.add_inplace(b);
  return out;
}

Tensor scale(const Tensor& a, double s) {
  require_finite(a, "scale");
  if (!std::isfinite(s)) throw NumericError("scale: factor is not finite");
  Tensor out = a;
  out.scale_inplace(s);
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw DimensionError("transpose: expected a matrix, got " + a.shape_str());
  Tensor out({a.cols(), a.rows()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor embed_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_finite(table, "embed_lookup");
  if (table.ndim() != 2) throw DimensionError("embed_lookup: table must be 2-D");
  const int v = table.rows(), d = table.cols();
  Tensor out({static_cast<int>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || id >= v)
      throw VocabularyError("embed_lookup: token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(v));
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(r), j) = table.at(id, j);
  }
  return out;
}

Tensor embed_lookup_vjp(const Tensor& table, const std::vector<int>& ids, const Tensor& cot) {
  require_finite(cot, "embed_lookup_vjp");
  Tensor g({table.rows(), table.cols()});
  if (cot.ndim() != 2 || cot.rows() != static_cast<int>(ids.size()) || cot.cols() != table.cols())
    throw DimensionError("embed_lookup_vjp: cotangent shape " + cot.shape_str());
  for (size_t r = 0; r < ids.size(); ++r)
    for (int j = 0; j < table.cols(); ++j)
      g.at(ids[r], j) += cot.at(static_cast<int>(r), j);
  return g;
}

// ---------------------------------------------------------------------------
// grad_check
// ---------------------------------------------------------------------------

double grad_check(const DualOp& op, const std::vector<Tensor>& inputs,
                  const Tensor& cotangent, double step) {
  const std::vector<Tensor> analytic = op.vjp(inputs, cotangent);
  if (analytic.size() != inputs.size())
    throw WiringError(op.name + ": vjp returned " + std::to_string(analytic.size()) +
                      " cotangents for " + std::to_string(inputs.size()) + " inputs");

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (size_t t = 0; t < inputs.size(); ++t) {
    for (size_t i = 0; i < inputs[t].numel(); ++i) {
      const double saved = probe[t].raw()[i];
      probe[t].raw()[i] = saved + step;
      const double up = op.forward(probe).dot(cotangent);
      probe[t].raw()[i] = saved - step;
      const double dn = op.forward(probe).dot(cotangent);
      probe[t].raw()[i] = saved;
      const double fd = (up - dn) / (2.0 * step);
      const double an = analytic[t].raw()[i];
      const double rel = std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace mga
