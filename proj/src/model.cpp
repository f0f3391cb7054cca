#include "panokit/model.hpp"

#include <cmath>

#include "panokit/error.hpp"
#include "panokit/threads.hpp"

namespace panokit {

ModelConfig ModelConfig::desk() {
  ModelConfig cfg;
  cfg.finalize();
  return cfg;
}

void ModelConfig::finalize() {
  backbone.in_channels = input_channels();
  patching.image_channels = input_channels();
  patching.image_height = height;
  patching.image_width = width;
  patching.feature_channels = backbone.channels;
  encoder.d_model = patching.d_model;
  head.d_model = patching.d_model;
  head.scale_widths = patching.scale_widths();
  head.out_width = width;

  const size_t div = size_t{1} << (backbone.channels.size() + 1);
  if (height % div != 0 || width % div != 0) {
    throw ConfigError("image extents must be divisible by " +
                      std::to_string(div));
  }
  if (height % patching.patch != 0 || width % patching.patch != 0) {
    throw ConfigError("image extents must be divisible by the patch size");
  }
  if (encoder.d_model % encoder.heads != 0) {
    throw ConfigError("d_model must be divisible by the head count");
  }
}

PanoModel::PanoModel(ParamStore& store, const ModelConfig& cfg, Rng& rng)
    : cfg_(cfg),
      backbone_(store, "backbone", cfg_.backbone, rng),
      embedder_(store, "embed", cfg_.patching, rng),
      encoder_(store, "encoder", cfg_.encoder, rng),
      head_(store, "head", cfg_.head, rng) {}

LayoutBoundaries PanoModel::forward(const Tensor& image, bool train,
                                    long randinit, ModelCache* cache,
                                    bool update_running) {
  if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != cfg_.height ||
      image.dim(2) != cfg_.width) {
    throw DimensionError("model input must be [3, " +
                         std::to_string(cfg_.height) + ", " +
                         std::to_string(cfg_.width) + "]");
  }
  Tensor enhanced =
      cfg_.use_edge_channels ? enhance(image, cfg_.mask) : image;
  FeaturePyramid pyramid = backbone_.forward(
      enhanced, train, cache ? &cache->backbone : nullptr, update_running);
  PatchSet img_patches = sample_image_patches(enhanced, cfg_.patching.patch);
  EmbeddingSequence seq = embedder_.build_sequence(
      pyramid, img_patches, randinit, cache ? &cache->patching : nullptr);
  Tensor feat = encoder_.forward(seq, cache ? &cache->encoder : nullptr);
  LayoutBoundaries out = head_.forward(
      feat, train, cache ? &cache->head : nullptr, update_running);
  if (cache != nullptr) cache->enhanced = std::move(enhanced);
  return out;
}

void PanoModel::backward(const ModelCache& cache, const Tensor& dyw,
                         const Tensor& dyc, const Tensor& dyf) {
  Tensor dfeat = head_.backward(cache.head, dyw, dyc, dyf);
  Tensor drows = encoder_.backward(cache.encoder, dfeat);
  std::vector<Tensor> dpyramid = embedder_.backward(cache.patching, drows);
  backbone_.backward(cache.backbone, dpyramid);  // input grad unused
}

void PanoModel::fold_norm_stats(const ModelCache& cache) {
  backbone_.fold_norm_stats(cache.backbone);
  head_.fold_norm_stats(cache.head);
}

LayoutBoundaries PanoModel::predict(const Tensor& image) {
  return forward(image, /*train=*/false, /*randinit=*/0, nullptr,
                 /*update_running=*/false);
}

double train_step(PanoModel& model, ParamStore& store,
                  const std::vector<const LabeledImage*>& batch,
                  const LossWeights& weights, const AdamConfig& adam,
                  Rng& rng) {
  if (batch.empty()) throw ConfigError("train_step needs a non-empty batch");
  store.zero_grads();
  const double inv = 1.0 / double(batch.size());
  double total = 0.0;
  for (const LabeledImage* s : batch) {
    const long randinit = long(rng.uniform_int(model.randinit_bound()));
    ModelCache cache;
    LayoutBoundaries pred = model.forward(s->image, /*train=*/true, randinit,
                                          &cache, /*update_running=*/false);
    total += total_loss(pred, s->target, s->ceil_height, weights);
    const size_t w = pred.width();
    Tensor dyw({w}), dyc({w}), dyf({w});
    total_loss_backward(pred, s->target, s->ceil_height, weights, dyw, dyc,
                        dyf);
    for (Tensor* g : {&dyw, &dyc, &dyf}) {
      for (size_t i = 0; i < g->size(); ++i) (*g)[i] *= inv;
    }
    model.backward(cache, dyw, dyc, dyf);
    model.fold_norm_stats(cache);
  }
  apply_adam(store, adam);
  return total * inv;
}

FloorPlan boundaries_to_plan(const LayoutBoundaries& b) {
  return boundaries_to_floorplan(b, peak_find(b.y_w));
}

EvalStats evaluate_model(PanoModel& model,
                         const std::vector<const LabeledImage*>& cases) {
  EvalStats stats;
  stats.count = cases.size();
  if (cases.empty()) return stats;
  std::vector<double> i2(cases.size(), 0.0), i3(cases.size(), 0.0);
  std::vector<char> bad(cases.size(), 0);
  parallel_for(cases.size(), [&](size_t i) {
    LayoutBoundaries pred = model.predict(cases[i]->image);
    try {
      FloorPlan plan = boundaries_to_plan(pred);
      i2[i] = iou2d(plan, cases[i]->plan);
      i3[i] = iou3d(plan, cases[i]->plan);
    } catch (const DegenerateLayoutError&) {
      bad[i] = 1;
    } catch (const HorizonDegenerateError&) {
      bad[i] = 1;
    } catch (const UndefinedMetricError&) {
      bad[i] = 1;
    }
  });
  for (size_t i = 0; i < cases.size(); ++i) {
    stats.mean_iou2d += i2[i];
    stats.mean_iou3d += i3[i];
    stats.degenerate += bad[i];
  }
  stats.mean_iou2d /= double(stats.count);
  stats.mean_iou3d /= double(stats.count);
  return stats;
}

}  // namespace panokit
