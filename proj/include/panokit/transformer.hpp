#pragma once

#include <string>
#include <vector>

#include "panokit/nn.hpp"
#include "panokit/patching.hpp"
#include "panokit/tensor.hpp"

namespace panokit {

struct EncoderConfig {
  size_t layers = 4;
  size_t heads = 4;
  size_t d_model = 256;
  size_t mlp_factor = 4;
};

struct AttnCache {
  Tensor input;               // [N, d]
  Tensor q, k, v;             // [N, d] each, all heads side by side
  std::vector<Tensor> probs;  // per head [N, N], rows sum to 1
  Tensor concat;              // [N, d] attention outputs before projection
};

// softmax(Q Kᵀ / sqrt(d/h)) V per head, heads concatenated, then a linear
// output projection. No masking: every row attends to every row.
struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, o_proj;
  size_t heads;
  size_t d_model;

  MultiHeadAttention(ParamStore& store, const std::string& prefix,
                     size_t d_model, size_t heads, Rng& rng);
  Tensor forward(const Tensor& x, AttnCache* cache) const;
  Tensor backward(const AttnCache& cache, const Tensor& dy) const;
};

struct BlockCache {
  Tensor input;         // [N, d]
  LayerNormCache ln1;
  Tensor ln1_out;
  AttnCache attn;
  Tensor mid;           // input + attention
  LayerNormCache ln2;
  Tensor ln2_out;
  Tensor mlp_pre;       // before gelu
  Tensor mlp_hidden;    // after gelu
};

// Pre-norm residual block: x + attn(norm(x)), then y + mlp(norm(y)).
struct EncoderBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear mlp1, mlp2;

  EncoderBlock(ParamStore& store, const std::string& prefix,
               const EncoderConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x, BlockCache* cache) const;
  Tensor backward(const BlockCache& cache, const Tensor& dy) const;
};

struct EncoderCache {
  std::vector<BlockCache> blocks;
  LayerNormCache final_ln;
  Tensor final_in;
  std::vector<size_t> selected;  // sequence rows kept in the output
  size_t total_rows = 0;
};

// Stack of pre-norm blocks with a final layer norm. The output keeps only
// the rows that came from feature-map patches; image-patch rows take part in
// attention but are dropped from the result.
class Encoder {
 public:
  Encoder(ParamStore& store, const std::string& prefix,
          const EncoderConfig& cfg, Rng& rng);

  // seq.index decides which rows survive; returns [feature rows, d_model].
  Tensor forward(const EmbeddingSequence& seq, EncoderCache* cache) const;
  // Gradient for every sequence row, [N_total, d_model]. Dropped rows get
  // gradient only through the attention mixing.
  Tensor backward(const EncoderCache& cache, const Tensor& dout) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<EncoderBlock> blocks_;
  LayerNorm final_ln_;
};

}  // namespace panokit
