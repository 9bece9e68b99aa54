#pragma once

#include <cmath>
#include <utility>

#include "core/tensor.hpp"

namespace mga {

struct LossConfig {
  double gamma = 0.15;               // hardness ratio; 0 recovers the plain loss
  double log_tau = std::log(0.07);   // temperature parameterization, tau = e^log_tau
  bool stop_grad_weights = true;     // treat alpha/beta as constants in backward
  bool sum_reduction = false;        // default: mean over the batch per direction

  double tau() const { return std::exp(log_tau); }
};

// Scalar loss with its full gradient. d_s has the reduction already applied,
// so callers can feed it straight into the similarity-matrix vjp.
struct LossResult {
  double value = 0.0;
  Tensor d_s;            // B x B
  double d_log_tau = 0.0;
};

// Symmetric contrastive loss over a B x B similarity matrix whose diagonal
// holds the positive pairs: cross-entropy along rows (audio to text) plus
// cross-entropy along columns (text to audio).
LossResult clap_loss(const Tensor& s, const LossConfig& cfg);

// Difficulty weights: alpha_{ij} = B * softmax_j(gamma * S_i/tau), i.e. each
// row sums to B; beta is the column-wise analogue. The k-sum includes k=i.
std::pair<Tensor, Tensor> difficulty_scores(const Tensor& s, const LossConfig& cfg);

// Hard-negative weighted variant: positives unweighted, each negative term
// e^{S_ij/tau} scaled by alpha_ij (rows) or beta_ij (columns).
LossResult hn_clap_loss(const Tensor& s, const LossConfig& cfg);

// Same loss with caller-supplied weights (diagonal entries of the weight
// matrices are ignored; positives are always unweighted). This is the frozen
// form the stop-gradient mode differentiates.
LossResult hn_clap_loss_with_weights(const Tensor& s, const LossConfig& cfg,
                                     const Tensor& alpha, const Tensor& beta);

}  // namespace mga
