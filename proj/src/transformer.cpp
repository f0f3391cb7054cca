#include "panokit/transformer.hpp"

#include <cmath>

#include "panokit/error.hpp"
#include "panokit/ops.hpp"

namespace panokit {

namespace {

Tensor transpose(const Tensor& a) {
  Tensor t({a.dim(1), a.dim(0)});
  for (size_t i = 0; i < a.dim(0); ++i)
    for (size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

Tensor slice_cols(const Tensor& a, size_t c0, size_t n) {
  Tensor s({a.dim(0), n});
  for (size_t i = 0; i < a.dim(0); ++i)
    for (size_t j = 0; j < n; ++j) s.at(i, j) = a.at(i, c0 + j);
  return s;
}

void add_into_cols(Tensor& a, size_t c0, const Tensor& s) {
  for (size_t i = 0; i < s.dim(0); ++i)
    for (size_t j = 0; j < s.dim(1); ++j) a.at(i, c0 + j) += s.at(i, j);
}

}  // namespace

MultiHeadAttention::MultiHeadAttention(ParamStore& store,
                                       const std::string& prefix,
                                       size_t d_model, size_t heads, Rng& rng)
    : q_proj(store, prefix + ".q", d_model, d_model, true, rng),
      k_proj(store, prefix + ".k", d_model, d_model, true, rng),
      v_proj(store, prefix + ".v", d_model, d_model, true, rng),
      o_proj(store, prefix + ".o", d_model, d_model, true, rng),
      heads(heads),
      d_model(d_model) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention: d_model must be a positive multiple of heads");
  }
}

Tensor MultiHeadAttention::forward(const Tensor& x, AttnCache* cache) const {
  if (x.ndim() != 2 || x.dim(1) != d_model) {
    throw DimensionError("attention: expected [N, d_model] input");
  }
  const size_t n = x.dim(0), dh = d_model / heads;
  const double scale = 1.0 / std::sqrt(double(dh));

  Tensor q = q_proj.forward(x);
  Tensor k = k_proj.forward(x);
  Tensor v = v_proj.forward(x);
  Tensor concat({n, d_model});
  if (cache) cache->probs.clear();
  for (size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kt = transpose(slice_cols(k, h * dh, dh));
    Tensor scores = matmul(qh, kt);
    for (size_t i = 0; i < scores.size(); ++i) scores[i] *= scale;
    Tensor p = softmax(scores);
    Tensor oh = matmul(p, slice_cols(v, h * dh, dh));
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < dh; ++j) concat.at(i, h * dh + j) = oh.at(i, j);
    if (cache) cache->probs.push_back(std::move(p));
  }
  Tensor out = o_proj.forward(concat);
  if (cache) {
    cache->input = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
  }
  return out;
}

Tensor MultiHeadAttention::backward(const AttnCache& cache,
                                    const Tensor& dy) const {
  const size_t n = cache.input.dim(0), dh = d_model / heads;
  const double scale = 1.0 / std::sqrt(double(dh));

  Tensor dconcat = o_proj.backward(cache.concat, dy);
  Tensor dq({n, d_model}), dk({n, d_model}), dv({n, d_model});
  for (size_t h = 0; h < heads; ++h) {
    const Tensor& p = cache.probs[h];
    Tensor qh = slice_cols(cache.q, h * dh, dh);
    Tensor kh = slice_cols(cache.k, h * dh, dh);
    Tensor vh = slice_cols(cache.v, h * dh, dh);
    Tensor doh = slice_cols(dconcat, h * dh, dh);

    Tensor dp = matmul(doh, transpose(vh));
    Tensor dvh = matmul(transpose(p), doh);
    Tensor ds = softmax_backward(p, dp);
    for (size_t i = 0; i < ds.size(); ++i) ds[i] *= scale;
    Tensor dqh = matmul(ds, kh);
    Tensor dkh = matmul(transpose(ds), qh);

    add_into_cols(dq, h * dh, dqh);
    add_into_cols(dk, h * dh, dkh);
    add_into_cols(dv, h * dh, dvh);
  }
  Tensor dx = q_proj.backward(cache.input, dq);
  dx.add_scaled(k_proj.backward(cache.input, dk), 1.0);
  dx.add_scaled(v_proj.backward(cache.input, dv), 1.0);
  return dx;
}

EncoderBlock::EncoderBlock(ParamStore& store, const std::string& prefix,
                           const EncoderConfig& cfg, Rng& rng)
    : ln1(store, prefix + ".ln1", cfg.d_model),
      ln2(store, prefix + ".ln2", cfg.d_model),
      attn(store, prefix + ".attn", cfg.d_model, cfg.heads, rng),
      mlp1(store, prefix + ".mlp1", cfg.d_model, cfg.d_model * cfg.mlp_factor,
           true, rng),
      mlp2(store, prefix + ".mlp2", cfg.d_model * cfg.mlp_factor, cfg.d_model,
           true, rng) {}

Tensor EncoderBlock::forward(const Tensor& x, BlockCache* cache) const {
  Tensor n1 = ln1.forward(x, cache ? &cache->ln1 : nullptr);
  Tensor a = attn.forward(n1, cache ? &cache->attn : nullptr);
  Tensor mid = x;
  mid.add_scaled(a, 1.0);
  Tensor n2 = ln2.forward(mid, cache ? &cache->ln2 : nullptr);
  Tensor pre = mlp1.forward(n2);
  Tensor hidden = activation(pre, Act::Gelu);
  Tensor out = mid;
  out.add_scaled(mlp2.forward(hidden), 1.0);
  if (cache) {
    cache->input = x;
    cache->ln1_out = std::move(n1);
    cache->mid = std::move(mid);
    cache->ln2_out = std::move(n2);
    cache->mlp_pre = std::move(pre);
    cache->mlp_hidden = std::move(hidden);
  }
  return out;
}

Tensor EncoderBlock::backward(const BlockCache& cache, const Tensor& dy) const {
  Tensor dmid = dy;
  Tensor dhidden = mlp2.backward(cache.mlp_hidden, dy);
  Tensor dpre = activation_backward(cache.mlp_pre, Act::Gelu, dhidden);
  Tensor dn2 = mlp1.backward(cache.ln2_out, dpre);
  dmid.add_scaled(ln2.backward(cache.ln2, dn2), 1.0);

  Tensor dx = dmid;
  Tensor dn1 = attn.backward(cache.attn, dmid);
  dx.add_scaled(ln1.backward(cache.ln1, dn1), 1.0);
  return dx;
}

namespace {
std::vector<EncoderBlock> make_blocks(ParamStore& store,
                                      const std::string& prefix,
                                      const EncoderConfig& cfg, Rng& rng) {
  std::vector<EncoderBlock> blocks;
  blocks.reserve(cfg.layers);
  for (size_t i = 0; i < cfg.layers; ++i) {
    blocks.emplace_back(store, prefix + ".b" + std::to_string(i), cfg, rng);
  }
  return blocks;
}
}  // namespace

Encoder::Encoder(ParamStore& store, const std::string& prefix,
                 const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg),
      blocks_(make_blocks(store, prefix, cfg, rng)),
      final_ln_(store, prefix + ".ln", cfg.d_model) {
  if (cfg.heads == 0 || cfg.d_model % cfg.heads != 0) {
    throw ConfigError("encoder: d_model must be a positive multiple of heads");
  }
}

Tensor Encoder::forward(const EmbeddingSequence& seq,
                        EncoderCache* cache) const {
  if (seq.rows.ndim() != 2 || seq.rows.dim(1) != cfg_.d_model) {
    throw DimensionError("encoder: sequence width does not match d_model");
  }
  if (seq.index.size() != seq.rows.dim(0)) {
    throw DimensionError("encoder: index map does not cover the sequence");
  }
  Tensor x = seq.rows;
  if (cache) cache->blocks.resize(blocks_.size());
  for (size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i].forward(x, cache ? &cache->blocks[i] : nullptr);
  }
  if (cache) cache->final_in = x;
  Tensor y = final_ln_.forward(x, cache ? &cache->final_ln : nullptr);

  std::vector<size_t> selected;
  for (size_t r = 0; r < seq.index.size(); ++r) {
    if (seq.index[r].scale >= 0) selected.push_back(r);
  }
  Tensor out({selected.size(), cfg_.d_model});
  for (size_t i = 0; i < selected.size(); ++i) {
    for (size_t j = 0; j < cfg_.d_model; ++j) {
      out.at(i, j) = y.at(selected[i], j);
    }
  }
  if (cache) {
    cache->selected = std::move(selected);
    cache->total_rows = seq.rows.dim(0);
  }
  return out;
}

Tensor Encoder::backward(const EncoderCache& cache, const Tensor& dout) const {
  if (dout.ndim() != 2 || dout.dim(0) != cache.selected.size() ||
      dout.dim(1) != cfg_.d_model) {
    throw DimensionError("encoder backward: gradient shape mismatch");
  }
  Tensor dy({cache.total_rows, cfg_.d_model});
  for (size_t i = 0; i < cache.selected.size(); ++i) {
    for (size_t j = 0; j < cfg_.d_model; ++j) {
      dy.at(cache.selected[i], j) = dout.at(i, j);
    }
  }
  Tensor dx = final_ln_.backward(cache.final_ln, dy);
  for (size_t i = blocks_.size(); i-- > 0;) {
    dx = blocks_[i].backward(cache.blocks[i], dx);
  }
  return dx;
}

}  // namespace panokit
