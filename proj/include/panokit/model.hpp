#pragma once

#include <string>
#include <vector>

#include "panokit/backbone.hpp"
#include "panokit/edge_enhance.hpp"
#include "panokit/geometry.hpp"
#include "panokit/layout_head.hpp"
#include "panokit/nn.hpp"
#include "panokit/patching.hpp"
#include "panokit/transformer.hpp"

namespace panokit {

// Cross-module settings for the full pipeline. Call finalize() after editing
// any field: it derives the dependent sub-configs (channel counts, scale
// widths, sequence geometry) and validates divisibility constraints.
struct ModelConfig {
  size_t width = 128;
  size_t height = 64;
  // When false the two frequency-domain edge channels are skipped and the
  // network consumes the raw 3-channel image.
  bool use_edge_channels = true;
  FreqMaskParams mask;

  BackboneConfig backbone;
  PatchingConfig patching;
  EncoderConfig encoder;
  LayoutHeadConfig head;

  static ModelConfig desk();
  void finalize();

  size_t input_channels() const { return use_edge_channels ? 5 : 3; }
};

struct ModelCache {
  Tensor enhanced;  // network input, [input_channels, H, W]
  BackboneCache backbone;
  PatchCache patching;
  EncoderCache encoder;
  HeadCache head;
};

// The full layout network: optional edge-channel synthesis, convolutional
// pyramid, patch embedding with positional encoding, transformer encoder,
// and the per-column boundary head.
class PanoModel {
 public:
  PanoModel(ParamStore& store, const ModelConfig& cfg, Rng& rng);

  // image is [3, H, W] in [0,1]. randinit shifts the sinusoidal position
  // embeddings (training draws it per forward pass; evaluation passes 0).
  // cache may be null when no backward pass will follow.
  LayoutBoundaries forward(const Tensor& image, bool train, long randinit,
                           ModelCache* cache, bool update_running = true);
  // Accumulates parameter gradients from the boundary-output gradients.
  void backward(const ModelCache& cache, const Tensor& dyw, const Tensor& dyc,
                const Tensor& dyf);
  // Deferred running-stat updates for caches made with update_running=false.
  void fold_norm_stats(const ModelCache& cache);

  // Convenience eval-mode forward (randinit 0, no cache, no stat updates).
  LayoutBoundaries predict(const Tensor& image);

  const ModelConfig& config() const { return cfg_; }
  // Exclusive upper bound for the training-time randinit draw: the column
  // count of the widest feature scale.
  size_t randinit_bound() const { return cfg_.patching.scale_width(0); }

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  PatchEmbedder embedder_;
  Encoder encoder_;
  LayoutHead head_;
};

// One training example: an RGB image with its per-column targets and the
// ground-truth geometry used for the 3-D loss and IoU scoring.
struct LabeledImage {
  Tensor image;  // [3, H, W] in [0,1]
  LayoutBoundaries target;
  double ceil_height = 1.0;
  FloorPlan plan;
  std::string id;
};

// One optimizer step over a batch: accumulates mean-loss gradients sample by
// sample in order (norm statistics folded in the same order), then applies
// Adam. Returns the mean total loss. rng drives the per-sample randinit draw.
double train_step(PanoModel& model, ParamStore& store,
                  const std::vector<const LabeledImage*>& batch,
                  const LossWeights& weights, const AdamConfig& adam, Rng& rng);

struct EvalStats {
  double mean_iou2d = 0.0;
  double mean_iou3d = 0.0;
  size_t count = 0;
  // Predictions with too few corner peaks to close a polygon; scored 0.
  size_t degenerate = 0;
};

// Eval-mode predictions scored against the ground-truth floor plans with
// 2-D/3-D IoU. Work fans out per sample; the reduction is in index order, so
// results do not depend on the worker count.
EvalStats evaluate_model(PanoModel& model,
                         const std::vector<const LabeledImage*>& cases);

// Boundaries -> corner peaks -> floor plan. Throws DegenerateLayoutError when
// fewer than 3 peaks survive (callers scoring IoU catch this and record a
// degenerate prediction).
FloorPlan boundaries_to_plan(const LayoutBoundaries& b);

}  // namespace panokit
