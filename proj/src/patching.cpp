#include "panokit/patching.hpp"

#include <cmath>

#include "panokit/error.hpp"

namespace panokit {

PatchSet sample_feature_patches(const Tensor& f) {
  if (f.ndim() != 3) throw DimensionError("sample_feature_patches: expected [C,H,W]");
  const size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  PatchSet set;
  set.scale = 0;  // caller tags the actual scale; payload shape is what matters
  set.source_width = w;
  set.patches.reserve(w);
  for (size_t j = 0; j < w; ++j) {
    Patch p;
    p.pos = j;
    p.payload = Tensor({c, h, 1});
    for (size_t ch = 0; ch < c; ++ch) {
      for (size_t y = 0; y < h; ++y) p.payload.at(ch, y, 0) = f.at(ch, y, j);
    }
    set.patches.push_back(std::move(p));
  }
  return set;
}

PatchSet sample_image_patches(const Tensor& img, size_t patch) {
  if (img.ndim() != 3) throw DimensionError("sample_image_patches: expected [C,H,W]");
  if (patch == 0) throw ConfigError("sample_image_patches: patch size 0");
  const size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (h % patch != 0 || w % patch != 0) {
    throw DimensionError("sample_image_patches: H and W must be divisible by " +
                         std::to_string(patch));
  }
  PatchSet set;
  set.scale = -1;
  set.source_width = w / patch;
  for (size_t by = 0; by < h / patch; ++by) {
    for (size_t bx = 0; bx < w / patch; ++bx) {
      Patch p;
      p.row = by;
      p.pos = bx;
      p.payload = Tensor({c, patch, patch});
      for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < patch; ++y) {
          for (size_t x = 0; x < patch; ++x) {
            p.payload.at(ch, y, x) = img.at(ch, by * patch + y, bx * patch + x);
          }
        }
      }
      set.patches.push_back(std::move(p));
    }
  }
  return set;
}

Tensor recurrent_pe(long pos, long randinit, size_t d_model) {
  if (d_model % 2 != 0) throw ConfigError("recurrent_pe: d_model must be even");
  Tensor pe({d_model});
  const double p = static_cast<double>(pos + randinit);
  for (size_t i = 0; i < d_model / 2; ++i) {
    double denom = std::pow(10000.0, 2.0 * static_cast<double>(i) /
                                         static_cast<double>(d_model));
    double arg = p / denom;
    pe[2 * i] = std::sin(arg);
    pe[2 * i + 1] = std::cos(arg);
  }
  return pe;
}

Tensor recurrent_pe_scale(long pos, long randinit, size_t k,
                          const std::vector<size_t>& scale_widths,
                          size_t d_model) {
  if (k < 1 || k > scale_widths.size()) {
    throw ConfigError("recurrent_pe_scale: scale index out of range");
  }
  long offset = 0;
  for (size_t j = 0; j + 1 < k; ++j) offset += static_cast<long>(scale_widths[j]);
  return recurrent_pe(pos + offset, randinit, d_model);
}

PeMode pe_mode_from_name(const std::string& name) {
  if (name == "recurrent") return PeMode::Recurrent;
  if (name == "learned") return PeMode::Learned;
  if (name == "none") return PeMode::None;
  throw ConfigError("unknown position-embedding mode: " + name);
}

std::string to_string(PeMode mode) {
  switch (mode) {
    case PeMode::Recurrent: return "recurrent";
    case PeMode::Learned: return "learned";
    case PeMode::None: return "none";
  }
  return "?";
}

std::vector<size_t> PatchingConfig::scale_widths() const {
  std::vector<size_t> w;
  for (size_t k = 0; k < scales(); ++k) w.push_back(scale_width(k));
  return w;
}

size_t PatchingConfig::feature_rows() const {
  size_t n = 0;
  for (size_t k = 0; k < scales(); ++k) n += scale_width(k);
  return n;
}

size_t PatchingConfig::total_rows() const {
  return feature_rows() + image_rows() * image_cols();
}

PatchEmbedder::PatchEmbedder(ParamStore& store, const std::string& prefix,
                             const PatchingConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.d_model % 2 != 0) throw ConfigError("patching: d_model must be even");
  const size_t down = size_t{1} << (cfg.scales() + 1);
  if (cfg.image_height % down != 0 || cfg.image_width % down != 0) {
    throw ConfigError("patching: image extents must be divisible by " +
                      std::to_string(down));
  }
  if (cfg.image_height % cfg.patch != 0 || cfg.image_width % cfg.patch != 0) {
    throw ConfigError("patching: image extents must be divisible by the patch size");
  }
  for (size_t k = 0; k < cfg.scales(); ++k) {
    size_t in = cfg.feature_channels[k] * cfg.scale_height(k);
    feature_embed_.emplace_back(store, prefix + ".f" + std::to_string(k), in,
                                cfg.d_model, true, rng);
  }
  const size_t flat = cfg.image_channels * cfg.patch * cfg.patch;
  if (cfg.d_hidden > 0) {
    img_l1_.emplace(store, prefix + ".img1", flat, cfg.d_hidden, true, rng);
    img_l2_.emplace(store, prefix + ".img2", cfg.d_hidden, cfg.d_model, true, rng);
  } else {
    img_l2_.emplace(store, prefix + ".img2", flat, cfg.d_model, true, rng);
  }
  if (cfg.use_row_embed) {
    row_embed_ = &store.add(prefix + ".row",
                            Tensor::gaussian({cfg.image_rows(), cfg.d_model}, rng, 0.02));
  }
  if (cfg.pe_mode == PeMode::Learned) {
    learned_pe_ = &store.add(prefix + ".abs_pe",
                             Tensor::gaussian({cfg.total_rows(), cfg.d_model}, rng, 0.02));
  }
}

Tensor PatchEmbedder::embed_feature_patch(const Patch& p, size_t scale) const {
  if (scale >= feature_embed_.size()) {
    throw DimensionError("embed_feature_patch: no such scale");
  }
  const size_t c = cfg_.feature_channels[scale], h = cfg_.scale_height(scale);
  if (p.payload.ndim() != 3 || p.payload.dim(0) != c || p.payload.dim(1) != h ||
      p.payload.dim(2) != 1) {
    throw DimensionError("embed_feature_patch: payload does not match scale " +
                         std::to_string(scale));
  }
  Tensor flat = p.payload.reshaped({1, c * h});
  return feature_embed_[scale].forward(flat).reshaped({cfg_.d_model});
}

Tensor PatchEmbedder::embed_image_patch(const Patch& p) const {
  const size_t flat = cfg_.image_channels * cfg_.patch * cfg_.patch;
  if (p.payload.size() != flat) {
    throw DimensionError("embed_image_patch: payload size mismatch");
  }
  Tensor x = p.payload.reshaped({1, flat});
  Tensor e;
  if (img_l1_) {
    Tensor h = activation(img_l1_->forward(x), Act::Gelu);
    e = img_l2_->forward(h);
  } else {
    e = img_l2_->forward(x);
  }
  Tensor out = e.reshaped({cfg_.d_model});
  if (row_embed_) {
    for (size_t i = 0; i < cfg_.d_model; ++i) {
      out[i] += row_embed_->value.at(p.row, i);
    }
  }
  return out;
}

EmbeddingSequence PatchEmbedder::build_sequence(const FeaturePyramid& pyramid,
                                                const PatchSet& image_patches,
                                                long randinit,
                                                PatchCache* cache) const {
  if (pyramid.size() != cfg_.scales()) {
    throw DimensionError("build_sequence: expected " +
                         std::to_string(cfg_.scales()) + " feature scales");
  }
  const size_t n_img = cfg_.image_rows() * cfg_.image_cols();
  if (image_patches.patches.size() != n_img) {
    throw DimensionError("build_sequence: expected " + std::to_string(n_img) +
                         " image patches");
  }
  EmbeddingSequence seq;
  seq.rows = Tensor({cfg_.total_rows(), cfg_.d_model});
  seq.feature_rows = cfg_.feature_rows();
  seq.index.reserve(cfg_.total_rows());
  if (cache) {
    cache->scale_inputs.clear();
    cache->img_row_index.clear();
  }
  const std::vector<size_t> widths = cfg_.scale_widths();

  size_t out_row = 0;
  for (size_t k = 0; k < cfg_.scales(); ++k) {
    const Tensor& f = pyramid[k];
    const size_t c = cfg_.feature_channels[k];
    const size_t h = cfg_.scale_height(k);
    const size_t w = cfg_.scale_width(k);
    if (f.ndim() != 3 || f.dim(0) != c || f.dim(1) != h || f.dim(2) != w) {
      throw DimensionError("build_sequence: scale " + std::to_string(k) +
                           " map has unexpected shape");
    }
    // Rows of x are flattened columns, matching embed_feature_patch's layout.
    Tensor x({w, c * h});
    for (size_t j = 0; j < w; ++j) {
      for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < h; ++y) x.at(j, ch * h + y) = f.at(ch, y, j);
      }
    }
    Tensor e = feature_embed_[k].forward(x);
    for (size_t j = 0; j < w; ++j, ++out_row) {
      Tensor pe;
      if (cfg_.pe_mode == PeMode::Recurrent) {
        pe = recurrent_pe_scale(static_cast<long>(j), randinit, k + 1, widths,
                                cfg_.d_model);
      }
      for (size_t i = 0; i < cfg_.d_model; ++i) {
        seq.rows.at(out_row, i) = e.at(j, i) + (pe.size() ? pe[i] : 0.0);
      }
      seq.index.push_back({static_cast<int>(k), j, 0});
    }
    if (cache) cache->scale_inputs.push_back(std::move(x));
  }

  const size_t flat = cfg_.image_channels * cfg_.patch * cfg_.patch;
  Tensor x({n_img, flat});
  for (size_t p = 0; p < n_img; ++p) {
    const Patch& patch = image_patches.patches[p];
    if (patch.payload.size() != flat) {
      throw DimensionError("build_sequence: image patch payload size mismatch");
    }
    if (patch.row >= cfg_.image_rows() || patch.pos >= cfg_.image_cols()) {
      throw DimensionError("build_sequence: image patch index out of range");
    }
    for (size_t i = 0; i < flat; ++i) x.at(p, i) = patch.payload[i];
  }
  Tensor hidden_pre, hidden, e;
  if (img_l1_) {
    hidden_pre = img_l1_->forward(x);
    hidden = activation(hidden_pre, Act::Gelu);
    e = img_l2_->forward(hidden);
  } else {
    e = img_l2_->forward(x);
  }
  for (size_t p = 0; p < n_img; ++p, ++out_row) {
    const Patch& patch = image_patches.patches[p];
    Tensor pe;
    if (cfg_.pe_mode == PeMode::Recurrent) {
      pe = recurrent_pe(static_cast<long>(patch.pos), randinit, cfg_.d_model);
    }
    for (size_t i = 0; i < cfg_.d_model; ++i) {
      double v = e.at(p, i) + (pe.size() ? pe[i] : 0.0);
      if (row_embed_) v += row_embed_->value.at(patch.row, i);
      seq.rows.at(out_row, i) = v;
    }
    seq.index.push_back({-1, patch.pos, patch.row});
    if (cache) cache->img_row_index.push_back(patch.row);
  }

  if (learned_pe_) {
    for (size_t r = 0; r < cfg_.total_rows(); ++r) {
      for (size_t i = 0; i < cfg_.d_model; ++i) {
        seq.rows.at(r, i) += learned_pe_->value.at(r, i);
      }
    }
  }
  if (cache) {
    cache->img_flat = std::move(x);
    cache->img_hidden_pre = std::move(hidden_pre);
    cache->img_hidden = std::move(hidden);
  }
  return seq;
}

std::vector<Tensor> PatchEmbedder::backward(const PatchCache& cache,
                                            const Tensor& drows) {
  if (drows.ndim() != 2 || drows.dim(0) != cfg_.total_rows() ||
      drows.dim(1) != cfg_.d_model) {
    throw DimensionError("patch backward: gradient shape mismatch");
  }
  if (learned_pe_) learned_pe_->grad.add_scaled(drows, 1.0);

  std::vector<Tensor> dpyramid;
  size_t row0 = 0;
  for (size_t k = 0; k < cfg_.scales(); ++k) {
    const size_t c = cfg_.feature_channels[k];
    const size_t h = cfg_.scale_height(k);
    const size_t w = cfg_.scale_width(k);
    Tensor de({w, cfg_.d_model});
    for (size_t j = 0; j < w; ++j) {
      for (size_t i = 0; i < cfg_.d_model; ++i) de.at(j, i) = drows.at(row0 + j, i);
    }
    Tensor dx = feature_embed_[k].backward(cache.scale_inputs[k], de);
    Tensor df({c, h, w});
    for (size_t j = 0; j < w; ++j) {
      for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < h; ++y) df.at(ch, y, j) = dx.at(j, ch * h + y);
      }
    }
    dpyramid.push_back(std::move(df));
    row0 += w;
  }

  const size_t n_img = cfg_.image_rows() * cfg_.image_cols();
  Tensor de({n_img, cfg_.d_model});
  for (size_t p = 0; p < n_img; ++p) {
    for (size_t i = 0; i < cfg_.d_model; ++i) de.at(p, i) = drows.at(row0 + p, i);
  }
  if (row_embed_) {
    for (size_t p = 0; p < n_img; ++p) {
      size_t r = cache.img_row_index[p];
      for (size_t i = 0; i < cfg_.d_model; ++i) {
        row_embed_->grad.at(r, i) += de.at(p, i);
      }
    }
  }
  if (img_l1_) {
    Tensor dhidden = img_l2_->backward(cache.img_hidden, de);
    Tensor dpre = activation_backward(cache.img_hidden_pre, Act::Gelu, dhidden);
    img_l1_->backward(cache.img_flat, dpre);
  } else {
    img_l2_->backward(cache.img_flat, de);
  }
  return dpyramid;
}

}  // namespace panokit
