#pragma once

#include <optional>
#include <string>
#include <vector>

#include "panokit/backbone.hpp"
#include "panokit/nn.hpp"
#include "panokit/tensor.hpp"

namespace panokit {

// One sampled patch. Feature-map patches are full-height single columns
// [C,H_k,1]; image patches are square blocks [C,P,P]. pos is the horizontal
// (block) index in the source; row is the vertical block index, used by image
// patches only.
struct Patch {
  Tensor payload;
  size_t pos = 0;
  size_t row = 0;
};

struct PatchSet {
  int scale = -1;  // 0-based feature scale, or -1 for image patches
  size_t source_width = 0;
  std::vector<Patch> patches;
};

// Every column of a [C,H_k,W_k] feature map, in column order.
PatchSet sample_feature_patches(const Tensor& f);
// Non-overlapping P x P blocks of a [C,H,W] image in row-major block order.
// Throws DimensionError when H or W is not divisible by patch.
PatchSet sample_image_patches(const Tensor& img, size_t patch);

// Sinusoidal embedding of an integer position with an additive start offset:
// component 2i = sin((pos+randinit)/10000^(2i/d)), 2i+1 the matching cos.
// Integer addition makes recurrent_pe(p, r, d) == recurrent_pe(p+r, 0, d)
// hold bit for bit.
Tensor recurrent_pe(long pos, long randinit, size_t d_model);
// Scale k (1-based) shifts pos by the total patch count of preceding scales.
Tensor recurrent_pe_scale(long pos, long randinit, size_t k,
                          const std::vector<size_t>& scale_widths,
                          size_t d_model);

enum class PeMode { Recurrent, Learned, None };
PeMode pe_mode_from_name(const std::string& name);
std::string to_string(PeMode mode);

struct PatchingConfig {
  size_t d_model = 256;
  size_t patch = 16;    // image patch edge P
  size_t d_hidden = 256;  // image MLP width; 0 collapses it to a single linear
  bool use_row_embed = true;
  PeMode pe_mode = PeMode::Recurrent;
  size_t image_channels = 5;
  size_t image_height = 64;
  size_t image_width = 128;
  std::vector<size_t> feature_channels{16, 32, 64, 128};

  size_t scales() const { return feature_channels.size(); }
  // Width of feature scale k (0-based): image_width / 2^(k+1).
  size_t scale_width(size_t k) const { return image_width >> (k + 1); }
  size_t scale_height(size_t k) const { return image_height >> (k + 1); }
  std::vector<size_t> scale_widths() const;
  size_t image_rows() const { return image_height / patch; }
  size_t image_cols() const { return image_width / patch; }
  size_t total_rows() const;
  size_t feature_rows() const;
};

// Maps a sequence row back to its source patch.
struct SeqIndexEntry {
  int scale = -1;  // -1 = image
  size_t pos = 0;
  size_t row = 0;
};

struct EmbeddingSequence {
  Tensor rows;  // [N_total, d_model]
  std::vector<SeqIndexEntry> index;
  size_t feature_rows = 0;  // rows [0, feature_rows) come from feature maps
};

struct PatchCache {
  std::vector<Tensor> scale_inputs;  // [W_k, C_k*H_k] per scale
  Tensor img_flat;                   // [N_img, C*P*P]
  Tensor img_hidden_pre;             // pre-gelu (empty when d_hidden == 0)
  Tensor img_hidden;                 // post-gelu
  std::vector<size_t> img_row_index;
};

// Owns the patch-embedding weights: one height-covering linear map per
// feature scale, an MLP plus learned per-row vertical embedding for image
// patches, and (in learned-PE mode) an absolute position table.
class PatchEmbedder {
 public:
  PatchEmbedder(ParamStore& store, const std::string& prefix,
                const PatchingConfig& cfg, Rng& rng);

  // Single-patch paths; used by tests and the batched sequence builder.
  Tensor embed_feature_patch(const Patch& p, size_t scale) const;
  Tensor embed_image_patch(const Patch& p) const;

  // Assembles the transformer input: scale 0..K-1 patch rows then image patch
  // rows, each with its position embedding applied. randinit shifts every
  // sinusoidal embedding's start; evaluation passes 0.
  EmbeddingSequence build_sequence(const FeaturePyramid& pyramid,
                                   const PatchSet& image_patches, long randinit,
                                   PatchCache* cache) const;

  // Accumulates weight gradients; returns the gradient per pyramid scale.
  std::vector<Tensor> backward(const PatchCache& cache, const Tensor& drows);

  const PatchingConfig& config() const { return cfg_; }

 private:
  PatchingConfig cfg_;
  std::vector<Linear> feature_embed_;  // per scale: C_k*H_k -> d_model
  std::optional<Linear> img_l1_;       // absent when d_hidden == 0
  std::optional<Linear> img_l2_;
  Param* row_embed_ = nullptr;
  Param* learned_pe_ = nullptr;
};

}  // namespace panokit
