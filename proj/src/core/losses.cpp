#include "core/losses.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace mga {

namespace {

void validate_similarity(const Tensor& s, const char* op) {
  require_finite(s, op);
  if (s.ndim() != 2 || s.rows() != s.cols() || s.rows() < 1)
    throw DimensionError(std::string(op) + ": similarity matrix must be square B x B" +
                         " with B >= 1, got " + s.shape_str());
}

// One direction of the contrastive loss over logits x: the row-i term is
// log(sum_j c_ij e^{x_ij}) - x_ii with c_ii forced to 1 (positives are never
// weighted). `weights` null means all-ones (the plain loss). When
// differentiate_weights is set the weights must be alpha_ij =
// B softmax_j(gamma x_i,:) of the same x, and the softmax path contributes
//   gamma [ (k!=i) a_ik e^{x_ik} - a_ik W_i / B ] / D_i
// per entry, W_i being the weighted negative mass D_i - e^{x_ii}.
// Accumulates into d_x; returns the sum over rows.
double direction_loss(const Tensor& x, const Tensor* weights, double gamma,
                      bool differentiate_weights, Tensor& d_x) {
  const int b = x.rows();
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    double m = x.at(i, 0);
    for (int j = 1; j < b; ++j) m = std::max(m, x.at(i, j));

    double denom = 0.0;    // D_i e^{-m}
    double neg_mass = 0.0; // W_i e^{-m}
    for (int j = 0; j < b; ++j) {
      const double c = (j == i || !weights) ? 1.0 : weights->at(i, j);
      const double term = c * std::exp(x.at(i, j) - m);
      denom += term;
      if (j != i) neg_mass += term;
    }
    total += m + std::log(denom) - x.at(i, i);

    for (int j = 0; j < b; ++j) {
      const double c = (j == i || !weights) ? 1.0 : weights->at(i, j);
      d_x.at(i, j) += c * std::exp(x.at(i, j) - m) / denom;
    }
    d_x.at(i, i) -= 1.0;

    if (differentiate_weights && weights && gamma != 0.0) {
      const double w_over_d = neg_mass / denom;
      for (int k = 0; k < b; ++k) {
        const double a = weights->at(i, k);
        double extra = -(a / b) * w_over_d;
        if (k != i) extra += a * std::exp(x.at(i, k) - m) / denom;
        d_x.at(i, k) += gamma * extra;
      }
    }
  }
  return total;
}

LossResult reduce_and_pack(double loss_sum, Tensor d_x, const Tensor& x,
                           const LossConfig& cfg, int b) {
  const double red = cfg.sum_reduction ? 1.0 : 1.0 / b;
  d_x.scale_inplace(red);

  LossResult r;
  r.value = loss_sum * red;
  r.d_log_tau = -d_x.dot(x);  // x = S/tau shrinks one-for-one in log_tau
  r.d_s = scale(d_x, 1.0 / cfg.tau());
  return r;
}

LossResult weighted_loss(const Tensor& s, const LossConfig& cfg, const Tensor* alpha,
                         const Tensor* beta, bool differentiate_weights) {
  const int b = s.rows();
  Tensor x = scale(s, 1.0 / cfg.tau());
  Tensor xt = transpose(x);

  Tensor d_x({b, b});
  Tensor d_xt({b, b});
  double loss = direction_loss(x, alpha, cfg.gamma, differentiate_weights, d_x);
  Tensor beta_t;
  const Tensor* col_weights = nullptr;
  if (beta) {
    beta_t = transpose(*beta);  // in transposed space beta is the row softmax
    col_weights = &beta_t;
  }
  loss += direction_loss(xt, col_weights, cfg.gamma, differentiate_weights, d_xt);
  d_x.add_inplace(transpose(d_xt));

  return reduce_and_pack(loss, std::move(d_x), x, cfg, b);
}

}  // namespace

LossResult clap_loss(const Tensor& s, const LossConfig& cfg) {
  validate_similarity(s, "clap_loss");
  return weighted_loss(s, cfg, nullptr, nullptr, false);
}

std::pair<Tensor, Tensor> difficulty_scores(const Tensor& s, const LossConfig& cfg) {
  validate_similarity(s, "difficulty_scores");
  const int b = s.rows();
  Tensor alpha({b, b});
  Tensor beta({b, b});
  if (cfg.gamma == 0.0) {
    alpha.fill(1.0);
    beta.fill(1.0);
    return {std::move(alpha), std::move(beta)};
  }

  Tensor x = scale(s, 1.0 / cfg.tau());
  for (int i = 0; i < b; ++i) {
    Tensor sm = softmax(x.row(i), cfg.gamma);
    for (int j = 0; j < b; ++j) alpha.at(i, j) = b * sm.at(j);
  }
  Tensor xt = transpose(x);
  for (int j = 0; j < b; ++j) {
    Tensor sm = softmax(xt.row(j), cfg.gamma);
    for (int i = 0; i < b; ++i) beta.at(i, j) = b * sm.at(i);
  }
  return {std::move(alpha), std::move(beta)};
}

LossResult hn_clap_loss(const Tensor& s, const LossConfig& cfg) {
  validate_similarity(s, "hn_clap_loss");
  auto [alpha, beta] = difficulty_scores(s, cfg);
  return weighted_loss(s, cfg, &alpha, &beta, !cfg.stop_grad_weights);
}

LossResult hn_clap_loss_with_weights(const Tensor& s, const LossConfig& cfg,
                                     const Tensor& alpha, const Tensor& beta) {
  validate_similarity(s, "hn_clap_loss_with_weights");
  require_same_shape(alpha, s, "hn_clap_loss_with_weights");
  require_same_shape(beta, s, "hn_clap_loss_with_weights");
  return weighted_loss(s, cfg, &alpha, &beta, false);
}

}  // namespace mga
