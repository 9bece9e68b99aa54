#include "core/encoder.hpp"

#include <cmath>
#include <utility>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace mga {

namespace {

constexpr double kLnEps = 1e-5;

// Row-wise layernorm over a T x d matrix.
Tensor layernorm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  Tensor out({x.rows(), x.cols()});
  for (int i = 0; i < x.rows(); ++i)
    out.set_row(i, layernorm(x.row(i), gain, bias, kLnEps));
  return out;
}

// Accumulates d_gain/d_bias, returns d_x.
Tensor layernorm_rows_backward(const Tensor& x, const Tensor& gain, const Tensor& bias,
                               const Tensor& cot, Tensor& d_gain, Tensor& d_bias) {
  Tensor dx({x.rows(), x.cols()});
  for (int i = 0; i < x.rows(); ++i) {
    auto g = layernorm_vjp(x.row(i), gain, bias, kLnEps, cot.row(i));
    dx.set_row(i, g.d_x);
    d_gain.add_inplace(g.d_gain);
    d_bias.add_inplace(g.d_bias);
  }
  return dx;
}

Tensor add_bias_rows(const Tensor& x, const Tensor& b) {
  Tensor out = x;
  for (int i = 0; i < x.rows(); ++i) out.add_row(i, b);
  return out;
}

void add_colsum(Tensor& acc, const Tensor& x) {
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) acc.at(j) += x.at(i, j);
}

}  // namespace

Tensor block_forward(const Tensor& u, const BlockParams& p, bool locality,
                     BlockCache* cache) {
  require_finite(u, "block_forward");
  const int t = u.rows(), d = u.cols();
  if (t < 1) throw DimensionError("block_forward: empty sequence");
  if (d != p.wv.rows())
    throw DimensionError("block_forward: width " + std::to_string(d) +
                         " does not match parameters " + p.wv.shape_str());

  BlockCache local;
  BlockCache& c = cache ? *cache : local;
  c.locality = locality;
  c.u_in = u;
  c.x1 = layernorm_rows(u, p.ln1_g, p.ln1_b);
  c.v = matmul(c.x1, p.wv);

  Tensor mix;
  if (locality) {
    // token mixing removed: the value path alone feeds the residual, so
    // every output position depends only on its own input position
    mix = c.v;
  } else {
    c.q = matmul(c.x1, p.wq);
    c.k = matmul(c.x1, p.wk);
    Tensor scores = matmul_nt(c.q, c.k);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    c.attn = Tensor({t, t});
    for (int i = 0; i < t; ++i)
      c.attn.set_row(i, softmax(scores.row(i), inv_sqrt_d));
    mix = matmul(c.attn, c.v);
  }

  c.h = add(u, mix);
  c.x2 = layernorm_rows(c.h, p.ln2_g, p.ln2_b);
  c.f = add_bias_rows(matmul(c.x2, p.w1), p.b1);
  c.g = gelu(c.f);
  Tensor ffn = add_bias_rows(matmul(c.g, p.w2), p.b2);
  return add(c.h, ffn);
}

Tensor block_backward(const BlockCache& c, const BlockParams& p, const Tensor& d_out,
                      BlockParams& grads) {
  const int t = c.u_in.rows(), d = c.u_in.cols();
  require_same_shape(d_out, c.u_in, "block_backward");

  // out = h + gelu(x2 w1 + b1) w2 + b2
  Tensor dh = d_out;
  auto [dg, dw2] = matmul_vjp(c.g, p.w2, d_out);
  grads.w2.add_inplace(dw2);
  add_colsum(grads.b2, d_out);
  Tensor df = gelu_vjp(c.f, dg);
  auto [dx2, dw1] = matmul_vjp(c.x2, p.w1, df);
  grads.w1.add_inplace(dw1);
  add_colsum(grads.b1, df);
  dh.add_inplace(
      layernorm_rows_backward(c.h, p.ln2_g, p.ln2_b, dx2, grads.ln2_g, grads.ln2_b));

  // h = u + mix
  Tensor du = dh;
  Tensor dx1({t, d});
  Tensor dv;
  if (c.locality) {
    dv = dh;
  } else {
    auto [dattn, dv_attn] = matmul_vjp(c.attn, c.v, dh);
    dv = std::move(dv_attn);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor dscores({t, t});
    for (int i = 0; i < t; ++i)
      dscores.set_row(i, softmax_vjp(c.attn.row(i), dattn.row(i), inv_sqrt_d));
    // scores = q k^T
    Tensor dq = matmul(dscores, c.k);
    Tensor dk = matmul_tn(dscores, c.q);
    auto [dx1q, dwq] = matmul_vjp(c.x1, p.wq, dq);
    auto [dx1k, dwk] = matmul_vjp(c.x1, p.wk, dk);
    grads.wq.add_inplace(dwq);
    grads.wk.add_inplace(dwk);
    dx1.add_inplace(dx1q);
    dx1.add_inplace(dx1k);
  }
  auto [dx1v, dwv] = matmul_vjp(c.x1, p.wv, dv);
  grads.wv.add_inplace(dwv);
  dx1.add_inplace(dx1v);

  du.add_inplace(
      layernorm_rows_backward(c.u_in, p.ln1_g, p.ln1_b, dx1, grads.ln1_g, grads.ln1_b));
  return du;
}

namespace {

// Shared tail: block stack -> per-row projector -> per-row L2 normalization.
Tensor encode_tail(Tensor u, const EncoderParams& p, bool locality_last, EncodeCache& c) {
  c.blocks.resize(p.blocks.size());
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    const bool locality = locality_last && b + 1 == p.blocks.size();
    u = block_forward(u, p.blocks[b], locality, &c.blocks[b]);
  }
  c.h_last = std::move(u);
  c.z1 = add_bias_rows(matmul(c.h_last, p.proj.w1), p.proj.b1);
  c.zg = gelu(c.z1);
  c.z2 = add_bias_rows(matmul(c.zg, p.proj.w2), p.proj.b2);
  Tensor feats({c.z2.rows(), c.z2.cols()});
  for (int i = 0; i < c.z2.rows(); ++i) feats.set_row(i, l2_normalize(c.z2.row(i)));
  c.features = feats;
  return feats;
}

// Backward of the shared tail; returns the cotangent at the block-stack input.
Tensor encode_tail_backward(const EncodeCache& c, const EncoderParams& p,
                            const Tensor& d_features, EncoderParams& grads) {
  Tensor dz2({c.z2.rows(), c.z2.cols()});
  for (int i = 0; i < c.z2.rows(); ++i)
    dz2.set_row(i, l2_normalize_vjp(c.z2.row(i), d_features.row(i)));

  auto [dzg, dpw2] = matmul_vjp(c.zg, p.proj.w2, dz2);
  grads.proj.w2.add_inplace(dpw2);
  add_colsum(grads.proj.b2, dz2);
  Tensor dz1 = gelu_vjp(c.z1, dzg);
  auto [dh, dpw1] = matmul_vjp(c.h_last, p.proj.w1, dz1);
  grads.proj.w1.add_inplace(dpw1);
  add_colsum(grads.proj.b1, dz1);

  Tensor du = std::move(dh);
  for (size_t b = c.blocks.size(); b-- > 0;)
    du = block_backward(c.blocks[b], p.blocks[b], du, grads.blocks[b]);
  return du;
}

void check_len(int n, int l_max, const char* what) {
  if (n < 1) throw DimensionError(std::string(what) + ": empty sequence");
  if (n > l_max)
    throw LengthError(std::string(what) + ": length " + std::to_string(n) +
                      " exceeds maximum " + std::to_string(l_max));
}

}  // namespace

Tensor encode_audio(const Tensor& frames, const EncoderParams& p, bool locality_last,
                    EncodeCache* cache) {
  require_finite(frames, "encode_audio");
  if (frames.ndim() != 2 || frames.cols() != p.input.rows())
    throw DimensionError("encode_audio: frames must be T x " +
                         std::to_string(p.input.rows()) + ", got " + frames.shape_str());
  check_len(frames.rows(), p.max_len(), "encode_audio");

  EncodeCache local;
  EncodeCache& c = cache ? *cache : local;
  c.frames = frames;
  Tensor u = matmul(frames, p.input);
  for (int i = 0; i < u.rows(); ++i) u.add_row(i, p.pos.row(i));
  return encode_tail(std::move(u), p, locality_last, c);
}

Tensor encode_text(const std::vector<int>& tokens, const EncoderParams& p,
                   EncodeCache* cache) {
  check_len(static_cast<int>(tokens.size()), p.max_len(), "encode_text");

  EncodeCache local;
  EncodeCache& c = cache ? *cache : local;
  c.token_ids = tokens;
  Tensor u = embed_lookup(p.input, tokens);
  for (int i = 0; i < u.rows(); ++i) u.add_row(i, p.pos.row(i));
  return encode_tail(std::move(u), p, false, c);
}

Tensor encode_audio_backward(const EncodeCache& c, const EncoderParams& p,
                             bool locality_last, const Tensor& d_features,
                             EncoderParams& grads) {
  (void)locality_last;  // the block caches remember which variant ran
  Tensor du = encode_tail_backward(c, p, d_features, grads);
  for (int i = 0; i < du.rows(); ++i) grads.pos.add_row(i, du.row(i));
  auto [d_frames, d_input] = matmul_vjp(c.frames, p.input, du);
  grads.input.add_inplace(d_input);
  return d_frames;
}

void encode_text_backward(const EncodeCache& c, const EncoderParams& p,
                          const Tensor& d_features, EncoderParams& grads) {
  Tensor du = encode_tail_backward(c, p, d_features, grads);
  for (int i = 0; i < du.rows(); ++i) grads.pos.add_row(i, du.row(i));
  grads.input.add_inplace(embed_lookup_vjp(p.input, c.token_ids, du));
}

BlockParams make_block(int d, Rng& rng) {
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  BlockParams p;
  p.wq = Tensor::randn({d, d}, rng, ws);
  p.wk = Tensor::randn({d, d}, rng, ws);
  p.wv = Tensor::randn({d, d}, rng, ws);
  p.w1 = Tensor::randn({d, 4 * d}, rng, ws);
  p.b1 = Tensor::zeros({4 * d});
  p.w2 = Tensor::randn({4 * d, d}, rng, 1.0 / std::sqrt(4.0 * d));
  p.b2 = Tensor::zeros({d});
  p.ln1_g = Tensor::full({d}, 1.0);
  p.ln1_b = Tensor::zeros({d});
  p.ln2_g = Tensor::full({d}, 1.0);
  p.ln2_b = Tensor::zeros({d});
  return p;
}

namespace {

EncoderParams make_encoder(Tensor input, int d, int joint_dim, int n_blocks, int l_max,
                           Rng& rng) {
  if (n_blocks < 1) throw DimensionError("encoder needs at least one block");
  EncoderParams p;
  p.input = std::move(input);
  p.pos = Tensor::randn({l_max, d}, rng, 0.02);
  for (int b = 0; b < n_blocks; ++b) p.blocks.push_back(make_block(d, rng));
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));
  p.proj.w1 = Tensor::randn({d, d}, rng, ws);
  p.proj.b1 = Tensor::zeros({d});
  p.proj.w2 = Tensor::randn({d, joint_dim}, rng, ws);
  p.proj.b2 = Tensor::zeros({joint_dim});
  return p;
}

}  // namespace

EncoderParams make_audio_encoder(int f_in, int d, int joint_dim, int n_blocks, int l_max,
                                 Rng& rng) {
  Tensor input = Tensor::randn({f_in, d}, rng, 1.0 / std::sqrt(static_cast<double>(f_in)));
  return make_encoder(std::move(input), d, joint_dim, n_blocks, l_max, rng);
}

EncoderParams make_text_encoder(int vocab, int d, int joint_dim, int n_blocks, int l_max,
                                Rng& rng) {
  Tensor input = Tensor::randn({vocab, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  return make_encoder(std::move(input), d, joint_dim, n_blocks, l_max, rng);
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z;
  z.input = Tensor(p.input.shape());
  z.pos = Tensor(p.pos.shape());
  for (const auto& b : p.blocks) {
    BlockParams zb;
    zb.wq = Tensor(b.wq.shape());
    zb.wk = Tensor(b.wk.shape());
    zb.wv = Tensor(b.wv.shape());
    zb.w1 = Tensor(b.w1.shape());
    zb.b1 = Tensor(b.b1.shape());
    zb.w2 = Tensor(b.w2.shape());
    zb.b2 = Tensor(b.b2.shape());
    zb.ln1_g = Tensor(b.ln1_g.shape());
    zb.ln1_b = Tensor(b.ln1_b.shape());
    zb.ln2_g = Tensor(b.ln2_g.shape());
    zb.ln2_b = Tensor(b.ln2_b.shape());
    z.blocks.push_back(std::move(zb));
  }
  z.proj.w1 = Tensor(p.proj.w1.shape());
  z.proj.b1 = Tensor(p.proj.b1.shape());
  z.proj.w2 = Tensor(p.proj.w2.shape());
  z.proj.b2 = Tensor(p.proj.b2.shape());
  return z;
}

size_t param_count(const EncoderParams& p) {
  size_t n = 0;
  visit_params(const_cast<EncoderParams&>(p), "x",
               [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

}  // namespace mga
