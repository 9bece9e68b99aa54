#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace mga {

// Pre-norm residual transformer block, single head, no output projection:
//   h = u + Mix(LN1(u))        Mix = Attn(q-k softmax) or the bare value path
//   out = h + FFN(LN2(h))      FFN = gelu(x W1 + b1) W2 + b2
// The locality-aware variant drops the attention aggregation and emits the
// projected value matrix directly, making the whole block position-wise.
struct BlockParams {
  Tensor wq, wk, wv;                  // d x d
  Tensor w1, b1, w2, b2;              // d x 4d, 4d, 4d x d, d
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;  // d
};

struct ProjectorParams {
  Tensor w1, b1;  // d x d, d
  Tensor w2, b2;  // d x D, D
};

struct EncoderParams {
  Tensor input;  // audio: F_in x d input projection; text: V x d embedding table
  Tensor pos;    // L_max x d learned positions, added once at input
  std::vector<BlockParams> blocks;
  ProjectorParams proj;

  int width() const { return input.cols(); }
  int max_len() const { return pos.rows(); }
};

struct BlockCache {
  Tensor u_in;
  Tensor x1;       // LN1 rows
  Tensor q, k, v;  // projections (q, k empty on the locality path)
  Tensor attn;     // T x T row-softmax weights
  Tensor h;        // residual after token mixing
  Tensor x2;       // LN2 rows
  Tensor f;        // pre-gelu FFN activations
  Tensor g;        // gelu(f)
  bool locality = false;
};

Tensor block_forward(const Tensor& u, const BlockParams& p, bool locality,
                     BlockCache* cache = nullptr);
// Returns the input cotangent; parameter gradients accumulate into `grads`.
Tensor block_backward(const BlockCache& c, const BlockParams& p, const Tensor& d_out,
                      BlockParams& grads);

struct EncodeCache {
  Tensor frames;  // audio path: raw T x F_in input, kept for the projection vjp
  std::vector<BlockCache> blocks;
  Tensor h_last;
  Tensor z1, zg, z2;  // projector rows: pre-gelu, gelu, output
  Tensor features;    // unit-norm rows, T x D
  std::vector<int> token_ids;  // text path only
};

// frames: T x F_in -> unit-norm frame features T x D. The last block runs as
// the locality-aware variant when locality_last is set.
Tensor encode_audio(const Tensor& frames, const EncoderParams& p, bool locality_last,
                    EncodeCache* cache = nullptr);
// tokens -> unit-norm word features N x D (all blocks vanilla)
Tensor encode_text(const std::vector<int>& tokens, const EncoderParams& p,
                   EncodeCache* cache = nullptr);

// Both return the cotangent w.r.t. the block-stack input; audio additionally
// maps it back through the input projection (returned tensor is d_frames).
Tensor encode_audio_backward(const EncodeCache& c, const EncoderParams& p,
                             bool locality_last, const Tensor& d_features,
                             EncoderParams& grads);
void encode_text_backward(const EncodeCache& c, const EncoderParams& p,
                          const Tensor& d_features, EncoderParams& grads);

// Parameter construction / bookkeeping
BlockParams make_block(int d, Rng& rng);
EncoderParams make_audio_encoder(int f_in, int d, int joint_dim, int n_blocks, int l_max,
                                 Rng& rng);
EncoderParams make_text_encoder(int vocab, int d, int joint_dim, int n_blocks, int l_max,
                                Rng& rng);
EncoderParams zeros_like(const EncoderParams& p);
size_t param_count(const EncoderParams& p);

// Deterministic traversal of every named tensor (used by the optimizer,
// checkpointing, and gradient flattening).
template <typename Fn>
void visit_params(EncoderParams& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".input", p.input);
  fn(prefix + ".pos", p.pos);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string b = prefix + ".block" + std::to_string(i);
    BlockParams& bp = p.blocks[i];
    fn(b + ".wq", bp.wq);
    fn(b + ".wk", bp.wk);
    fn(b + ".wv", bp.wv);
    fn(b + ".w1", bp.w1);
    fn(b + ".b1", bp.b1);
    fn(b + ".w2", bp.w2);
    fn(b + ".b2", bp.b2);
    fn(b + ".ln1_g", bp.ln1_g);
    fn(b + ".ln1_b", bp.ln1_b);
    fn(b + ".ln2_g", bp.ln2_g);
    fn(b + ".ln2_b", bp.ln2_b);
  }
  fn(prefix + ".proj.w1", p.proj.w1);
  fn(prefix + ".proj.b1", p.proj.b1);
  fn(prefix + ".proj.w2", p.proj.w2);
  fn(prefix + ".proj.b2", p.proj.b2);
}

}  // namespace mga
