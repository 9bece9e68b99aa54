#pragma once

#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace mga {

// Shared codeword table used by both modalities. Rows live on the unit sphere;
// the optimizer re-normalizes them after every step so the affinity stays a
// scaled cosine.
struct Codebook {
  Tensor z;          // M x D codewords
  double eta = 0.07; // affinity scaling term, > 0

  int m() const { return z.rows(); }
  int dim() const { return z.cols(); }
};

Codebook make_codebook(int m, int dim, double eta, Rng& rng);
// Projects every row back to unit norm (post-optimizer-step maintenance).
void renormalize_rows(Tensor& z);

enum class Pooling { kMax, kMean };
enum class Normalizer { kSparsemax, kSoftmax };

struct AffinityResult {
  Tensor s;                 // M affinities
  std::vector<int> argmax;  // winning frame index per codeword
};

// s_k = max_j <local_j, z_k> / eta, ties to the lowest frame index.
AffinityResult affinity(const Tensor& local, const Codebook& cb);

struct AggregationResult {
  Tensor global;                  // D, = w^T Z
  Tensor w;                       // M simplex weights
  Tensor s;                       // M affinities fed to the normalizer
  std::vector<int> argmax_frame;  // per codeword; -1 under mean pooling
  std::vector<int> support;       // indices with w_k > 0
  double boundary_margin = 0.0;   // sparsemax threshold margin; +inf for softmax
};

AggregationResult aggregate(const Tensor& local, const Codebook& cb);
AggregationResult aggregate_variant(const Tensor& local, const Codebook& cb,
                                    Pooling pooling, Normalizer norm);

// Accumulates into d_local and d_z. The result must come from the matching
// (pooling, norm) forward on the same inputs.
void aggregate_backward(const Tensor& local, const Codebook& cb, Pooling pooling,
                        Normalizer norm, const AggregationResult& r,
                        const Tensor& d_global, Tensor& d_local, Tensor& d_z);

// Baseline global feature: mean of rows, L2-normalized.
Tensor mean_pool_aggregate(const Tensor& local);
// Returns d_local for the cotangent at the normalized mean.
Tensor mean_pool_backward(const Tensor& local, const Tensor& d_out);

// Per-frame cosine timeline <frames_t, query>, both unit-norm by convention.
Tensor frame_similarity_map(const Tensor& frames, const Tensor& query);

// Diagnostics: per codeword, class indices ranked by <z_k, class_global>,
// descending, ties to the lower class index.
std::vector<std::vector<std::pair<int, double>>> codeword_class_ranking(
    const Codebook& cb, const Tensor& class_globals);
// Timeline of one codeword against a clip's frame features.
Tensor codeword_timeline(const Tensor& frames, const Codebook& cb, int codeword);

}  // namespace mga
