#pragma once

#include <string>
#include <vector>

#include "panokit/nn.hpp"
#include "panokit/tensor.hpp"

namespace panokit {

// One [C_k, H/2^(k+1), W/2^(k+1)] feature map per block, coarsest last.
using FeaturePyramid = std::vector<Tensor>;

struct BackboneConfig {
  size_t in_channels = 5;
  std::vector<size_t> channels{16, 32, 64, 128};
};

// Simplified strip pooling: the row-mean map (each row replaced by its mean)
// and the column-mean map each pass through a learned 1x1 conv, are added to
// the input, and the sum is rectified. w_row/w_col are [C,C,1,1], biases [C].
Tensor strip_pool(const Tensor& f, const Tensor& w_row, const Tensor& b_row,
                  const Tensor& w_col, const Tensor& b_col);
// Recomputes the cheap intermediates; accumulates into the gradient outputs.
void strip_pool_backward(const Tensor& f, const Tensor& w_row,
                         const Tensor& b_row, const Tensor& w_col,
                         const Tensor& b_col, const Tensor& dout, Tensor& df,
                         Tensor& dw_row, Tensor& db_row, Tensor& dw_col,
                         Tensor& db_col);

struct BackboneBlockCache {
  Tensor pad1;      // wrap-padded block input
  Tensor c1;        // conv1 output, pre-norm
  BcnCache norm;
  Tensor n1;        // normalized, pre-relu
  Tensor pad2;      // wrap-padded relu(n1)
  Tensor c2;        // conv2 output, pre-relu
  Tensor r2;        // strip-pool input
};

struct BackboneCache {
  Tensor input;
  std::vector<BackboneBlockCache> blocks;
};

// Stack of stride-2 blocks, each: conv3x3(s2) -> channel norm -> relu ->
// conv3x3 -> relu -> strip pooling, with horizontal circular padding and
// vertical zero padding. Each block's pooled output is both a pyramid level
// and the next block's input.
class Backbone {
 public:
  Backbone(ParamStore& store, const std::string& prefix,
           const BackboneConfig& cfg, Rng& rng);

  // Requires H and W divisible by 2^(blocks+1); cache may be null when no
  // backward pass will follow.
  FeaturePyramid forward(const Tensor& x, bool train, BackboneCache* cache,
                         bool update_running = true);
  // dpyramid holds one gradient per scale (empty tensors are treated as
  // zero). Accumulates parameter gradients; returns the input gradient.
  Tensor backward(const BackboneCache& cache,
                  const std::vector<Tensor>& dpyramid);
  // Deferred running-stat updates (see BatchChannelNorm::fold).
  void fold_norm_stats(const BackboneCache& cache);

  const BackboneConfig& config() const { return cfg_; }

 private:
  struct Block {
    Conv2d conv1, conv2;
    BatchChannelNorm norm;
    Conv2d strip_row, strip_col;
  };
  BackboneConfig cfg_;
  std::vector<Block> blocks_;
};

}  // namespace panokit
