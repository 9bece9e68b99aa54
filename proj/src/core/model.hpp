#pragma once

#include <string>
#include <vector>

#include "core/codebook.hpp"
#include "core/config.hpp"
#include "core/encoder.hpp"
#include "core/losses.hpp"
#include "core/tensor.hpp"

namespace mga {

// Full alignment model: audio and text encoders that project into a joint
// space, the shared codeword table both modalities aggregate through, and the
// learned temperature. Toggles in `cfg` select the aggregation and loss
// variants; the codebook tensor is always present so checkpoints keep one
// layout, but with model.use_codebook = false nothing reads or updates it.
struct Model {
  Config cfg;
  EncoderParams audio;
  EncoderParams text;
  Codebook cb;
  Tensor log_tau;  // shape {1}

  Pooling pooling() const;
  Normalizer normalizer() const;
  LossConfig loss_config() const;
};

// Derives the init stream from cfg (train.seed) and sizes the encoders from
// the corpus geometry. Validates the config first.
Model make_model(const Config& cfg, int f_in, int vocab_size, int audio_max_len);

// Same shapes, all zeros; gradient and optimizer-moment container.
Model zeros_like_model(const Model& m);
size_t param_count(const Model& m);

// Deterministic traversal of every learnable tensor. Order is fixed; the
// optimizer, checkpoint writer, and gradient utilities all rely on it.
template <typename Fn>
void visit_model(Model& m, Fn&& fn) {
  visit_params(m.audio, "audio", fn);
  visit_params(m.text, "text", fn);
  fn(std::string("codebook.z"), m.cb.z);
  fn(std::string("loss.log_tau"), m.log_tau);
}

// One clip or caption pushed through its encoder and the configured
// aggregation. `global` is unit-norm; the raw aggregate and the codebook
// weights are kept for the backward pass and for diagnostics.
struct EmbedCache {
  EncodeCache enc;
  AggregationResult agg;  // codebook path only
  Tensor global_raw;      // codebook path: pre-normalization aggregate
  Tensor global;          // D, unit norm
};

Tensor embed_audio(const Model& m, const Tensor& frames, EmbedCache* cache = nullptr);
Tensor embed_text(const Model& m, const std::vector<int>& tokens,
                  EmbedCache* cache = nullptr);

// Batch pass: embeds B clips and B captions, forms the B x B cosine matrix,
// and applies the configured loss.
struct BatchCache {
  std::vector<EmbedCache> audio;
  std::vector<EmbedCache> text;
  Tensor audio_globals;  // B x D
  Tensor text_globals;   // B x D
  Tensor sim;            // B x B
  LossResult loss;
};

double model_forward(const Model& m, const std::vector<Tensor>& frames,
                     const std::vector<std::vector<int>>& captions, BatchCache& cache);
// Accumulates parameter gradients for the batch pass into `grads`.
void model_backward(const Model& m, const BatchCache& cache, Model& grads);

}  // namespace mga
