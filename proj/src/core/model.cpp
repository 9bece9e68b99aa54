#include "core/model.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace mga {
namespace {

constexpr uint64_t kModelStream = 0x6d6f64656c;  // "model"

}  // namespace

Pooling Model::pooling() const {
  return cfg.pooling == "mean" ? Pooling::kMean : Pooling::kMax;
}

Normalizer Model::normalizer() const {
  return cfg.norm == "softmax" ? Normalizer::kSoftmax : Normalizer::kSparsemax;
}

LossConfig Model::loss_config() const {
  LossConfig lc;
  lc.gamma = cfg.gamma;
  lc.log_tau = log_tau.at(0);
  lc.stop_grad_weights = cfg.stop_grad_weights;
  lc.sum_reduction = cfg.sum_reduction;
  return lc;
}

Model make_model(const Config& cfg, int f_in, int vocab_size, int audio_max_len) {
  validate_config(cfg);
  if (f_in <= 0 || vocab_size <= 0 || audio_max_len <= 0)
    throw ConfigError("model geometry must be positive");
  Rng rng(Rng::mix(cfg.seed, kModelStream));
  Model m;
  m.cfg = cfg;
  m.audio = make_audio_encoder(f_in, cfg.d, cfg.joint_dim, cfg.audio_blocks,
                               audio_max_len, rng);
  m.text = make_text_encoder(vocab_size, cfg.d, cfg.joint_dim, cfg.text_blocks,
                             cfg.text_max_len, rng);
  m.cb = make_codebook(cfg.codebook_size, cfg.joint_dim, cfg.eta, rng);
  m.log_tau = Tensor::vec({std::log(cfg.tau_init)});
  return m;
}

Model zeros_like_model(const Model& m) {
  Model z;
  z.cfg = m.cfg;
  z.audio = zeros_like(m.audio);
  z.text = zeros_like(m.text);
  z.cb.z = Tensor::zeros(m.cb.z.shape());
  z.cb.eta = m.cb.eta;
  z.log_tau = Tensor::zeros({1});
  return z;
}

size_t param_count(const Model& m) {
  size_t n = 0;
  visit_model(const_cast<Model&>(m), [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

namespace {

// Shared tail of both embed paths: configured aggregation + normalization.
Tensor aggregate_features(const Model& m, const Tensor& features, EmbedCache* cache) {
  if (!m.cfg.use_codebook) {
    Tensor global = mean_pool_aggregate(features);
    if (cache) cache->global = global;
    return global;
  }
  AggregationResult agg = aggregate_variant(features, m.cb, m.pooling(), m.normalizer());
  Tensor global = l2_normalize(agg.global);
  if (cache) {
    cache->agg = std::move(agg);
    cache->global_raw = cache->agg.global;
    cache->global = global;
  }
  return global;
}

// Cotangent at the unit-norm global pushed back to the frame/word features.
// Codebook gradients accumulate into d_z when the codebook path is active.
Tensor aggregate_backward_features(const Model& m, const EmbedCache& c,
                                   const Tensor& features, const Tensor& d_global,
                                   Tensor& d_z) {
  if (!m.cfg.use_codebook) return mean_pool_backward(features, d_global);
  Tensor d_raw = l2_normalize_vjp(c.global_raw, d_global);
  Tensor d_features = Tensor::zeros(features.shape());
  aggregate_backward(features, m.cb, m.pooling(), m.normalizer(), c.agg, d_raw,
                     d_features, d_z);
  return d_features;
}

}  // namespace

Tensor embed_audio(const Model& m, const Tensor& frames, EmbedCache* cache) {
  EmbedCache local;
  EmbedCache& c = cache ? *cache : local;
  Tensor features = encode_audio(frames, m.audio, m.cfg.locality_last, &c.enc);
  return aggregate_features(m, features, &c);
}

Tensor embed_text(const Model& m, const std::vector<int>& tokens, EmbedCache* cache) {
  EmbedCache local;
  EmbedCache& c = cache ? *cache : local;
  Tensor features = encode_text(tokens, m.text, &c.enc);
  return aggregate_features(m, features, &c);
}

double model_forward(const Model& m, const std::vector<Tensor>& frames,
                     const std::vector<std::vector<int>>& captions, BatchCache& cache) {
  if (frames.size() != captions.size())
    throw DimensionError("batch: clip and caption counts differ");
  const int b = static_cast<int>(frames.size());
  if (b == 0) throw DimensionError("batch: empty");

  cache.audio.assign(static_cast<size_t>(b), EmbedCache{});
  cache.text.assign(static_cast<size_t>(b), EmbedCache{});
  cache.audio_globals = Tensor::zeros({b, m.cfg.joint_dim});
  cache.text_globals = Tensor::zeros({b, m.cfg.joint_dim});
  for (int i = 0; i < b; ++i) {
    cache.audio_globals.set_row(i, embed_audio(m, frames[static_cast<size_t>(i)],
                                               &cache.audio[static_cast<size_t>(i)]));
    cache.text_globals.set_row(i, embed_text(m, captions[static_cast<size_t>(i)],
                                             &cache.text[static_cast<size_t>(i)]));
  }
  cache.sim = matmul_nt(cache.audio_globals, cache.text_globals);

  LossConfig lc = m.loss_config();
  cache.loss = m.cfg.use_hard_negative ? hn_clap_loss(cache.sim, lc)
                                       : clap_loss(cache.sim, lc);
  return cache.loss.value;
}

void model_backward(const Model& m, const BatchCache& cache, Model& grads) {
  const int b = cache.sim.rows();
  // S = A Q^T on the unit-norm globals
  auto [d_audio_g, d_text_g] =
      matmul_vjp(cache.audio_globals, transpose(cache.text_globals), cache.loss.d_s);
  d_text_g = transpose(d_text_g);
  grads.log_tau.at(0) += cache.loss.d_log_tau;

  for (int i = 0; i < b; ++i) {
    const size_t si = static_cast<size_t>(i);
    Tensor d_feat_a = aggregate_backward_features(
        m, cache.audio[si], cache.audio[si].enc.features, d_audio_g.row(i), grads.cb.z);
    encode_audio_backward(cache.audio[si].enc, m.audio, m.cfg.locality_last, d_feat_a,
                          grads.audio);
    Tensor d_feat_t = aggregate_backward_features(
        m, cache.text[si], cache.text[si].enc.features, d_text_g.row(i), grads.cb.z);
    encode_text_backward(cache.text[si].enc, m.text, d_feat_t, grads.text);
  }
}

}  // namespace mga
