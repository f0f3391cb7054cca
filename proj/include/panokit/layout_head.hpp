#pragma once

#include <string>
#include <vector>

#include "panokit/geometry.hpp"
#include "panokit/nn.hpp"
#include "panokit/tensor.hpp"

namespace panokit {

struct LayoutHeadConfig {
  size_t d_model = 256;
  std::vector<size_t> scale_widths{64, 32, 16, 8};
  size_t out_width = 128;
};

struct HeadCache {
  Tensor squeeze_in;  // [W_out, K*d] stacked resized columns
  Tensor conv1_in;    // wrap-padded squeeze output
  BcnCache bn1;
  Tensor bn1_out;  // pre-relu
  Tensor conv2_in;
  BcnCache bn2;
  Tensor bn2_out;
  Tensor conv3_in;
  Tensor raw;  // [3, 1, W_out] pre-activation logits
};

// Fuses the per-scale encoder rows into three per-column signals: wall
// probability y_w = sigmoid(a0), ceiling latitude y_c = (pi/2)|tanh(a1)|,
// floor latitude y_f = -(pi/2)|tanh(a2)|. Every scale map is circularly
// resampled to the output width, stacked, squeezed back to d_model channels
// by a column-spanning kernel, and refined by circular width-3 convolutions
// with per-channel normalization. The last bias starts at (0, +0.5, -0.5) so
// an untrained head already emits in-range boundaries.
class LayoutHead {
 public:
  LayoutHead(ParamStore& store, const std::string& prefix,
             const LayoutHeadConfig& cfg, Rng& rng);

  // feat is [sum of scale widths, d_model], scales concatenated in order.
  LayoutBoundaries forward(const Tensor& feat, bool train, HeadCache* cache,
                           bool update_running = true);
  // Accumulates weight grads; returns the gradient for feat.
  Tensor backward(const HeadCache& cache, const Tensor& dyw, const Tensor& dyc,
                  const Tensor& dyf);
  void fold_norm_stats(const HeadCache& cache);

  const LayoutHeadConfig& config() const { return cfg_; }

 private:
  LayoutHeadConfig cfg_;
  Linear squeeze_;
  Conv2d conv1_, conv2_, conv3_;
  BatchChannelNorm bn1_, bn2_;
};

// Mean binary cross-entropy with predictions clamped to [1e-7, 1-1e-7].
double loss_corner(const Tensor& pred_yw, const Tensor& gt_yw);
Tensor loss_corner_backward(const Tensor& pred_yw, const Tensor& gt_yw);

// Projects both boundary sets onto the floor (y = -1) and ceiling
// (y = +ceil_height_gt) planes and averages the per-column L1 gap between
// predicted and reference points. Latitudes nearer the horizon than the
// projection guard are clamped first, so those columns contribute a fixed
// penalty at the clamped latitude.
double loss_boundary_3d(const LayoutBoundaries& pred,
                        const LayoutBoundaries& gt, double ceil_height_gt);
void loss_boundary_3d_backward(const LayoutBoundaries& pred,
                               const LayoutBoundaries& gt,
                               double ceil_height_gt, Tensor& dyc, Tensor& dyf);

// Flat alternative: mean per-column L1 gap of the latitudes themselves.
double loss_boundary_l1(const LayoutBoundaries& pred,
                        const LayoutBoundaries& gt);
void loss_boundary_l1_backward(const LayoutBoundaries& pred,
                               const LayoutBoundaries& gt, Tensor& dyc,
                               Tensor& dyf);

struct LossWeights {
  double w_cor = 1.0;
  double w_bon = 1.0;
  bool boundary_in_3d = true;  // false switches to the latitude-L1 form
};

double total_loss(const LayoutBoundaries& pred, const LayoutBoundaries& gt,
                  double ceil_height_gt, const LossWeights& weights);
void total_loss_backward(const LayoutBoundaries& pred,
                         const LayoutBoundaries& gt, double ceil_height_gt,
                         const LossWeights& weights, Tensor& dyw, Tensor& dyc,
                         Tensor& dyf);

}  // namespace panokit
