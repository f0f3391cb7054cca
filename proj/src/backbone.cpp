#include "panokit/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "panokit/error.hpp"

namespace panokit {

namespace {

// Row means summed in value order, so that a horizontal roll of the input —
// which only rotates each row — reproduces the same mean bit for bit.
Tensor row_mean_map(const Tensor& f) {
  const size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  Tensor out(f.shape());
  std::vector<double> row(w);
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t y = 0; y < h; ++y) {
      for (size_t x = 0; x < w; ++x) row[x] = f.at(ch, y, x);
      std::sort(row.begin(), row.end());
      double s = 0.0;
      for (double v : row) s += v;
      s /= static_cast<double>(w);
      for (size_t x = 0; x < w; ++x) out.at(ch, y, x) = s;
    }
  }
  return out;
}

Tensor col_mean_map(const Tensor& f) {
  const size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  Tensor out(f.shape());
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (size_t y = 0; y < h; ++y) s += f.at(ch, y, x);
      s /= static_cast<double>(h);
      for (size_t y = 0; y < h; ++y) out.at(ch, y, x) = s;
    }
  }
  return out;
}

}  // namespace

Tensor strip_pool(const Tensor& f, const Tensor& w_row, const Tensor& b_row,
                  const Tensor& w_col, const Tensor& b_col) {
  if (f.ndim() != 3) throw DimensionError("strip_pool: expected [C,h,w]");
  Tensor a = conv2d(row_mean_map(f), w_row, b_row);
  Tensor b = conv2d(col_mean_map(f), w_col, b_col);
  Tensor out(f.shape());
  for (size_t i = 0; i < f.size(); ++i) {
    double s = f[i] + a[i] + b[i];
    out[i] = s > 0.0 ? s : 0.0;
  }
  return out;
}

void strip_pool_backward(const Tensor& f, const Tensor& w_row,
                         const Tensor& b_row, const Tensor& w_col,
                         const Tensor& b_col, const Tensor& dout, Tensor& df,
                         Tensor& dw_row, Tensor& db_row, Tensor& dw_col,
                         Tensor& db_col) {
  const size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  Tensor rmap = row_mean_map(f);
  Tensor cmap = col_mean_map(f);
  Tensor a = conv2d(rmap, w_row, b_row);
  Tensor b = conv2d(cmap, w_col, b_col);

  Tensor ds(f.shape());
  for (size_t i = 0; i < f.size(); ++i) {
    double s = f[i] + a[i] + b[i];
    ds[i] = s > 0.0 ? dout[i] : 0.0;
  }
  df.add_scaled(ds, 1.0);

  Tensor drmap(f.shape()), dcmap(f.shape());
  Tensor dwr(w_row.shape()), dbr(b_row.shape());
  conv2d_backward(rmap, w_row, {}, ds, &drmap, &dwr, &dbr);
  dw_row.add_scaled(dwr, 1.0);
  db_row.add_scaled(dbr, 1.0);
  Tensor dwc(w_col.shape()), dbc(b_col.shape());
  conv2d_backward(cmap, w_col, {}, ds, &dcmap, &dwc, &dbc);
  dw_col.add_scaled(dwc, 1.0);
  db_col.add_scaled(dbc, 1.0);

  // Mean broadcast: every input cell of a row receives that row's average
  // gradient (and likewise per column).
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t y = 0; y < h; ++y) {
      double s = 0.0;
      for (size_t x = 0; x < w; ++x) s += drmap.at(ch, y, x);
      s /= static_cast<double>(w);
      for (size_t x = 0; x < w; ++x) df.at(ch, y, x) += s;
    }
    for (size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (size_t y = 0; y < h; ++y) s += dcmap.at(ch, y, x);
      s /= static_cast<double>(h);
      for (size_t y = 0; y < h; ++y) df.at(ch, y, x) += s;
    }
  }
}

Backbone::Backbone(ParamStore& store, const std::string& prefix,
                   const BackboneConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.channels.empty()) throw ConfigError("backbone: no blocks configured");
  size_t in = cfg.in_channels;
  for (size_t k = 0; k < cfg.channels.size(); ++k) {
    size_t out = cfg.channels[k];
    std::string base = prefix + ".b" + std::to_string(k);
    blocks_.push_back(Block{
        Conv2d(store, base + ".conv1", in, out, 3, 3, {2, 2, 1, 0}, true, rng),
        Conv2d(store, base + ".conv2", out, out, 3, 3, {1, 1, 1, 0}, true, rng),
        BatchChannelNorm(store, base + ".norm", out),
        Conv2d(store, base + ".strip_row", out, out, 1, 1, {}, true, rng),
        Conv2d(store, base + ".strip_col", out, out, 1, 1, {}, true, rng),
    });
    in = out;
  }
}

FeaturePyramid Backbone::forward(const Tensor& x, bool train,
                                 BackboneCache* cache, bool update_running) {
  if (x.ndim() != 3 || x.dim(0) != cfg_.in_channels) {
    throw DimensionError("backbone: expected [" +
                         std::to_string(cfg_.in_channels) + ",H,W] input");
  }
  const size_t need = size_t{1} << (blocks_.size() + 1);
  if (x.dim(1) % need != 0 || x.dim(2) % need != 0) {
    throw DimensionError("backbone: H and W must be divisible by " +
                         std::to_string(need));
  }
  if (cache) {
    cache->input = x;
    cache->blocks.assign(blocks_.size(), {});
  }
  FeaturePyramid pyramid;
  Tensor cur = x;
  for (size_t k = 0; k < blocks_.size(); ++k) {
    Block& blk = blocks_[k];
    BackboneBlockCache scratch;
    BackboneBlockCache& bc = cache ? cache->blocks[k] : scratch;
    bc.pad1 = pad_wrap_x(cur, 1);
    bc.c1 = blk.conv1.forward(bc.pad1);
    bc.n1 = blk.norm.forward(bc.c1, train, cache ? &bc.norm : nullptr,
                             update_running);
    Tensor r1 = activation(bc.n1, Act::Relu);
    bc.pad2 = pad_wrap_x(r1, 1);
    bc.c2 = blk.conv2.forward(bc.pad2);
    bc.r2 = activation(bc.c2, Act::Relu);
    cur = strip_pool(bc.r2, blk.strip_row.w->value, blk.strip_row.b->value,
                     blk.strip_col.w->value, blk.strip_col.b->value);
    pyramid.push_back(cur);
  }
  return pyramid;
}

Tensor Backbone::backward(const BackboneCache& cache,
                          const std::vector<Tensor>& dpyramid) {
  if (dpyramid.size() != blocks_.size()) {
    throw DimensionError("backbone backward: one gradient per scale expected");
  }
  Tensor dnext;  // gradient flowing into the block below (its pooled output)
  for (size_t k = blocks_.size(); k-- > 0;) {
    Block& blk = blocks_[k];
    const BackboneBlockCache& bc = cache.blocks[k];
    Tensor dout = dpyramid[k].size() ? dpyramid[k] : Tensor(bc.r2.shape());
    if (dnext.size()) dout.add_scaled(dnext, 1.0);

    Tensor dr2(bc.r2.shape());
    strip_pool_backward(bc.r2, blk.strip_row.w->value, blk.strip_row.b->value,
                        blk.strip_col.w->value, blk.strip_col.b->value, dout,
                        dr2, blk.strip_row.w->grad, blk.strip_row.b->grad,
                        blk.strip_col.w->grad, blk.strip_col.b->grad);
    Tensor dc2 = activation_backward(bc.c2, Act::Relu, dr2);
    Tensor dpad2(bc.pad2.shape());
    blk.conv2.backward(bc.pad2, dc2, &dpad2);
    Tensor dr1 = pad_wrap_x_backward(dpad2, 1);
    Tensor dn1 = activation_backward(bc.n1, Act::Relu, dr1);
    Tensor dc1 = blk.norm.backward(bc.norm, dn1);
    Tensor dpad1(bc.pad1.shape());
    blk.conv1.backward(bc.pad1, dc1, &dpad1);
    dnext = pad_wrap_x_backward(dpad1, 1);
  }
  return dnext;
}

void Backbone::fold_norm_stats(const BackboneCache& cache) {
  for (size_t k = 0; k < blocks_.size(); ++k) {
    blocks_[k].norm.fold(cache.blocks[k].norm);
  }
}

}  // namespace panokit
