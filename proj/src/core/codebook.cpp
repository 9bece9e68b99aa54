#include "core/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace mga {

Codebook make_codebook(int m, int dim, double eta, Rng& rng) {
  if (m < 1 || dim < 1) throw DimensionError("make_codebook: M and D must be positive");
  if (!(eta > 0.0)) throw ConfigError("make_codebook: eta must be > 0");
  Codebook cb;
  cb.z = Tensor::randn({m, dim}, rng);
  renormalize_rows(cb.z);
  cb.eta = eta;
  return cb;
}

void renormalize_rows(Tensor& z) {
  for (int i = 0; i < z.rows(); ++i) {
    Tensor row = z.row(i);
    // Idempotent at unit norm so a zero-lr step leaves the bits alone; real
    // optimizer drift is orders of magnitude above this.
    if (std::abs(row.norm2() - 1.0) < 1e-12) continue;
    z.set_row(i, l2_normalize(row));
  }
}

AffinityResult affinity(const Tensor& local, const Codebook& cb) {
  require_finite(local, "affinity");
  if (local.ndim() != 2 || local.rows() < 1)
    throw DimensionError("affinity: local features must be a nonempty matrix");
  if (local.cols() != cb.dim())
    throw DimensionError("affinity: feature dim " + std::to_string(local.cols()) +
                         " vs codeword dim " + std::to_string(cb.dim()));

  Tensor dots = matmul_nt(local, cb.z);  // T x M
  AffinityResult r;
  r.s = Tensor({cb.m()});
  r.argmax.assign(static_cast<size_t>(cb.m()), 0);
  for (int k = 0; k < cb.m(); ++k) {
    double best = dots.at(0, k);
    int best_j = 0;
    for (int j = 1; j < local.rows(); ++j)
      if (dots.at(j, k) > best) {
        best = dots.at(j, k);
        best_j = j;
      }
    r.s.at(k) = best / cb.eta;
    r.argmax[static_cast<size_t>(k)] = best_j;
  }
  return r;
}

namespace {

// Mean-pooled affinity variant: s_k = mean_j <local_j, z_k> / eta.
Tensor mean_affinity(const Tensor& local, const Codebook& cb) {
  Tensor dots = matmul_nt(local, cb.z);
  Tensor s({cb.m()});
  for (int k = 0; k < cb.m(); ++k) {
    double acc = 0.0;
    for (int j = 0; j < local.rows(); ++j) acc += dots.at(j, k);
    // divide like the max path so the single-frame case agrees exactly
    s.at(k) = acc / local.rows() / cb.eta;
  }
  return s;
}

}  // namespace

AggregationResult aggregate_variant(const Tensor& local, const Codebook& cb,
                                    Pooling pooling, Normalizer norm) {
  AggregationResult r;
  if (pooling == Pooling::kMax) {
    AffinityResult a = affinity(local, cb);
    r.s = std::move(a.s);
    r.argmax_frame = std::move(a.argmax);
  } else {
    require_finite(local, "aggregate");
    if (local.ndim() != 2 || local.rows() < 1)
      throw DimensionError("aggregate: local features must be a nonempty matrix");
    if (local.cols() != cb.dim())
      throw DimensionError("aggregate: feature dim mismatch");
    r.s = mean_affinity(local, cb);
    r.argmax_frame.assign(static_cast<size_t>(cb.m()), -1);
  }

  if (norm == Normalizer::kSparsemax) {
    SparsemaxResult sm = sparsemax_full(r.s);
    r.w = std::move(sm.p);
    r.support = std::move(sm.support);
    r.boundary_margin = sm.boundary_margin;
  } else {
    r.w = softmax(r.s);
    r.support.resize(static_cast<size_t>(cb.m()));
    for (int k = 0; k < cb.m(); ++k) r.support[static_cast<size_t>(k)] = k;
    r.boundary_margin = std::numeric_limits<double>::infinity();
  }

  r.global = Tensor({cb.dim()});
  for (int k : r.support)
    for (int j = 0; j < cb.dim(); ++j) r.global.at(j) += r.w.at(k) * cb.z.at(k, j);
  return r;
}

AggregationResult aggregate(const Tensor& local, const Codebook& cb) {
  return aggregate_variant(local, cb, Pooling::kMax, Normalizer::kSparsemax);
}

void aggregate_backward(const Tensor& local, const Codebook& cb, Pooling pooling,
                        Normalizer norm, const AggregationResult& r,
                        const Tensor& d_global, Tensor& d_local, Tensor& d_z) {
  require_same_shape(d_global, r.global, "aggregate_backward");

  // global = sum_k w_k z_k
  Tensor d_w({cb.m()});
  for (int k : r.support) {
    double acc = 0.0;
    for (int j = 0; j < cb.dim(); ++j) acc += cb.z.at(k, j) * d_global.at(j);
    d_w.at(k) = acc;
    for (int j = 0; j < cb.dim(); ++j) d_z.at(k, j) += r.w.at(k) * d_global.at(j);
  }

  Tensor d_s = norm == Normalizer::kSparsemax ? sparsemax_vjp(r.support, d_w)
                                              : softmax_vjp(r.w, d_w);

  const double inv_eta = 1.0 / cb.eta;
  if (pooling == Pooling::kMax) {
    // s_k touches only the winning frame
    for (int k = 0; k < cb.m(); ++k) {
      const double g = d_s.at(k) * inv_eta;
      if (g == 0.0) continue;
      const int j = r.argmax_frame[static_cast<size_t>(k)];
      for (int c = 0; c < cb.dim(); ++c) {
        d_local.at(j, c) += g * cb.z.at(k, c);
        d_z.at(k, c) += g * local.at(j, c);
      }
    }
  } else {
    const double g_scale = inv_eta / local.rows();
    for (int k = 0; k < cb.m(); ++k) {
      const double g = d_s.at(k) * g_scale;
      if (g == 0.0) continue;
      for (int j = 0; j < local.rows(); ++j)
        for (int c = 0; c < cb.dim(); ++c) {
          d_local.at(j, c) += g * cb.z.at(k, c);
          d_z.at(k, c) += g * local.at(j, c);
        }
    }
  }
}

Tensor mean_pool_aggregate(const Tensor& local) {
  require_finite(local, "mean_pool_aggregate");
  if (local.ndim() != 2 || local.rows() < 1)
    throw DimensionError("mean_pool_aggregate: need a nonempty matrix");
  Tensor mean({local.cols()});
  for (int i = 0; i < local.rows(); ++i)
    for (int j = 0; j < local.cols(); ++j) mean.at(j) += local.at(i, j);
  mean.scale_inplace(1.0 / local.rows());
  return l2_normalize(mean);
}

Tensor mean_pool_backward(const Tensor& local, const Tensor& d_out) {
  Tensor mean({local.cols()});
  for (int i = 0; i < local.rows(); ++i)
    for (int j = 0; j < local.cols(); ++j) mean.at(j) += local.at(i, j);
  mean.scale_inplace(1.0 / local.rows());
  Tensor d_mean = l2_normalize_vjp(mean, d_out);
  Tensor d_local({local.rows(), local.cols()});
  const double inv = 1.0 / local.rows();
  for (int i = 0; i < local.rows(); ++i)
    for (int j = 0; j < local.cols(); ++j) d_local.at(i, j) = d_mean.at(j) * inv;
  return d_local;
}

Tensor frame_similarity_map(const Tensor& frames, const Tensor& query) {
  require_finite(frames, "frame_similarity_map");
  require_finite(query, "frame_similarity_map");
  if (frames.ndim() != 2 || query.ndim() != 1 || frames.cols() != query.dim(0))
    throw DimensionError("frame_similarity_map: frames T x D vs query D");
  Tensor out({frames.rows()});
  for (int t = 0; t < frames.rows(); ++t) {
    double acc = 0.0;
    for (int j = 0; j < frames.cols(); ++j) acc += frames.at(t, j) * query.at(j);
    out.at(t) = acc;
  }
  return out;
}

std::vector<std::vector<std::pair<int, double>>> codeword_class_ranking(
    const Codebook& cb, const Tensor& class_globals) {
  if (class_globals.ndim() != 2 || class_globals.cols() != cb.dim())
    throw DimensionError("codeword_class_ranking: class globals must be C x D");
  Tensor sims = matmul_nt(cb.z, class_globals);  // M x C
  std::vector<std::vector<std::pair<int, double>>> out(static_cast<size_t>(cb.m()));
  for (int k = 0; k < cb.m(); ++k) {
    auto& row = out[static_cast<size_t>(k)];
    row.reserve(static_cast<size_t>(class_globals.rows()));
    for (int c = 0; c < class_globals.rows(); ++c) row.emplace_back(c, sims.at(k, c));
    std::stable_sort(row.begin(), row.end(), [](const auto& a, const auto& b) {
      return a.second > b.second;
    });
  }
  return out;
}

Tensor codeword_timeline(const Tensor& frames, const Codebook& cb, int codeword) {
  if (codeword < 0 || codeword >= cb.m())
    throw DimensionError("codeword_timeline: codeword index out of range");
  return frame_similarity_map(frames, cb.z.row(codeword));
}

}  // namespace mga
