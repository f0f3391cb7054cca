#include "panokit/layout_head.hpp"

#include <cmath>

#include "panokit/error.hpp"
#include "panokit/ops.hpp"

namespace panokit {

namespace {

constexpr double kHalfPi = 1.5707963267948966;
constexpr double kProbEps = 1e-7;

// Columns of a stacked [K*d, W] map as rows, [W, K*d].
Tensor columns_as_rows(const Tensor& stacked) {
  Tensor cols({stacked.dim(1), stacked.dim(0)});
  for (size_t c = 0; c < stacked.dim(0); ++c)
    for (size_t j = 0; j < stacked.dim(1); ++j)
      cols.at(j, c) = stacked.at(c, j);
  return cols;
}

double clamp_away_from_horizon(double gamma, bool* clamped) {
  if (gamma >= 0 && gamma < kGammaMin) {
    if (clamped) *clamped = true;
    return kGammaMin;
  }
  if (gamma < 0 && gamma > -kGammaMin) {
    if (clamped) *clamped = true;
    return -kGammaMin;
  }
  if (clamped) *clamped = false;
  return gamma;
}

double column_longitude(size_t j, size_t w) {
  return ((double(j) + 0.5) / double(w) - 0.5) * 2.0 * 3.141592653589793;
}

}  // namespace

LayoutHead::LayoutHead(ParamStore& store, const std::string& prefix,
                       const LayoutHeadConfig& cfg, Rng& rng)
    : cfg_(cfg),
      squeeze_(store, prefix + ".squeeze",
               cfg.scale_widths.size() * cfg.d_model, cfg.d_model, true, rng),
      conv1_(store, prefix + ".conv1", cfg.d_model, cfg.d_model, 1, 3, {}, true,
             rng),
      conv2_(store, prefix + ".conv2", cfg.d_model, cfg.d_model, 1, 3, {}, true,
             rng),
      conv3_(store, prefix + ".conv3", cfg.d_model, 3, 1, 1, {}, true, rng),
      bn1_(store, prefix + ".bn1", cfg.d_model),
      bn2_(store, prefix + ".bn2", cfg.d_model) {
  if (cfg.scale_widths.empty()) throw ConfigError("head: no scale widths");
  // Start the boundaries away from the horizon: zero conv3 weights alone
  // would put both latitudes at the degenerate 0 limit.
  conv3_.b->value[0] = 0.0;
  conv3_.b->value[1] = 0.5;
  conv3_.b->value[2] = -0.5;
}

LayoutBoundaries LayoutHead::forward(const Tensor& feat, bool train,
                                     HeadCache* cache, bool update_running) {
  const size_t d = cfg_.d_model, w = cfg_.out_width;
  const size_t scales = cfg_.scale_widths.size();
  size_t total = 0;
  for (size_t s : cfg_.scale_widths) total += s;
  if (feat.ndim() != 2 || feat.dim(0) != total || feat.dim(1) != d) {
    throw DimensionError("head: feature rows do not partition into the scales");
  }

  // Per scale: rows -> [d, s_k] map -> circular resample -> slot in the stack.
  Tensor stacked({scales * d, w});
  size_t row0 = 0;
  for (size_t k = 0; k < scales; ++k) {
    const size_t sk = cfg_.scale_widths[k];
    Tensor map({d, sk});
    for (size_t j = 0; j < sk; ++j)
      for (size_t c = 0; c < d; ++c) map.at(c, j) = feat.at(row0 + j, c);
    Tensor r = resize_circular(map, w);
    for (size_t c = 0; c < d; ++c)
      for (size_t j = 0; j < w; ++j) stacked.at(k * d + c, j) = r.at(c, j);
    row0 += sk;
  }

  Tensor cols = columns_as_rows(stacked);  // [w, K*d]
  Tensor sq_rows = squeeze_.forward(cols); // [w, d]
  Tensor sq({d, size_t{1}, w});
  for (size_t c = 0; c < d; ++c)
    for (size_t j = 0; j < w; ++j) sq.at(c, 0, j) = sq_rows.at(j, c);

  Tensor p1 = pad_wrap_x(sq, 1);
  Tensor c1 = conv1_.forward(p1);
  BcnCache local_bn1, local_bn2;
  BcnCache* b1 = cache ? &cache->bn1 : &local_bn1;
  BcnCache* b2 = cache ? &cache->bn2 : &local_bn2;
  Tensor n1 = bn1_.forward(c1, train, b1, update_running);
  Tensor a1 = activation(n1, Act::Relu);
  Tensor p2 = pad_wrap_x(a1, 1);
  Tensor c2 = conv2_.forward(p2);
  Tensor n2 = bn2_.forward(c2, train, b2, update_running);
  Tensor a2 = activation(n2, Act::Relu);
  Tensor raw = conv3_.forward(a2);  // [3, 1, w]

  LayoutBoundaries out;
  out.y_w = Tensor({w});
  out.y_c = Tensor({w});
  out.y_f = Tensor({w});
  for (size_t j = 0; j < w; ++j) {
    out.y_w[j] = 1.0 / (1.0 + std::exp(-raw.at(0, 0, j)));
    out.y_c[j] = kHalfPi * std::abs(std::tanh(raw.at(1, 0, j)));
    out.y_f[j] = -kHalfPi * std::abs(std::tanh(raw.at(2, 0, j)));
  }
  if (cache) {
    cache->squeeze_in = std::move(cols);
    cache->conv1_in = std::move(p1);
    cache->bn1_out = std::move(n1);
    cache->conv2_in = std::move(p2);
    cache->bn2_out = std::move(n2);
    cache->conv3_in = std::move(a2);
    cache->raw = std::move(raw);
  }
  return out;
}

Tensor LayoutHead::backward(const HeadCache& cache, const Tensor& dyw,
                            const Tensor& dyc, const Tensor& dyf) {
  const size_t d = cfg_.d_model, w = cfg_.out_width;
  const size_t scales = cfg_.scale_widths.size();

  Tensor draw({3, size_t{1}, w});
  for (size_t j = 0; j < w; ++j) {
    double s = 1.0 / (1.0 + std::exp(-cache.raw.at(0, 0, j)));
    draw.at(0, 0, j) = dyw[j] * s * (1.0 - s);
    double tc = std::tanh(cache.raw.at(1, 0, j));
    double sc = tc > 0 ? 1.0 : (tc < 0 ? -1.0 : 0.0);
    draw.at(1, 0, j) = dyc[j] * kHalfPi * sc * (1.0 - tc * tc);
    double tf = std::tanh(cache.raw.at(2, 0, j));
    double sf = tf > 0 ? 1.0 : (tf < 0 ? -1.0 : 0.0);
    draw.at(2, 0, j) = dyf[j] * -kHalfPi * sf * (1.0 - tf * tf);
  }

  Tensor da2;
  conv3_.backward(cache.conv3_in, draw, &da2);
  Tensor dn2 = activation_backward(cache.bn2_out, Act::Relu, da2);
  Tensor dc2 = bn2_.backward(cache.bn2, dn2);
  Tensor dp2;
  conv2_.backward(cache.conv2_in, dc2, &dp2);
  Tensor da1 = pad_wrap_x_backward(dp2, 1);
  Tensor dn1 = activation_backward(cache.bn1_out, Act::Relu, da1);
  Tensor dc1 = bn1_.backward(cache.bn1, dn1);
  Tensor dp1;
  conv1_.backward(cache.conv1_in, dc1, &dp1);
  Tensor dsq = pad_wrap_x_backward(dp1, 1);  // [d, 1, w]

  Tensor dsq_rows({w, d});
  for (size_t c = 0; c < d; ++c)
    for (size_t j = 0; j < w; ++j) dsq_rows.at(j, c) = dsq.at(c, 0, j);
  Tensor dcols = squeeze_.backward(cache.squeeze_in, dsq_rows);  // [w, K*d]

  size_t total = 0;
  for (size_t s : cfg_.scale_widths) total += s;
  Tensor dfeat({total, d});
  size_t row0 = 0;
  for (size_t k = 0; k < scales; ++k) {
    const size_t sk = cfg_.scale_widths[k];
    Tensor dr({d, w});
    for (size_t c = 0; c < d; ++c)
      for (size_t j = 0; j < w; ++j) dr.at(c, j) = dcols.at(j, k * d + c);
    Tensor dmap = resize_circular_backward(sk, w, dr);  // [d, sk]
    for (size_t j = 0; j < sk; ++j)
      for (size_t c = 0; c < d; ++c) dfeat.at(row0 + j, c) = dmap.at(c, j);
    row0 += sk;
  }
  return dfeat;
}

void LayoutHead::fold_norm_stats(const HeadCache& cache) {
  bn1_.fold(cache.bn1);
  bn2_.fold(cache.bn2);
}

double loss_corner(const Tensor& pred_yw, const Tensor& gt_yw) {
  if (pred_yw.size() != gt_yw.size()) {
    throw DimensionError("corner loss: length mismatch");
  }
  double sum = 0;
  for (size_t j = 0; j < pred_yw.size(); ++j) {
    double p = std::min(std::max(pred_yw[j], kProbEps), 1.0 - kProbEps);
    sum += -(gt_yw[j] * std::log(p) + (1.0 - gt_yw[j]) * std::log(1.0 - p));
  }
  return sum / double(pred_yw.size());
}

Tensor loss_corner_backward(const Tensor& pred_yw, const Tensor& gt_yw) {
  Tensor d({pred_yw.size()});
  const double inv_n = 1.0 / double(pred_yw.size());
  for (size_t j = 0; j < pred_yw.size(); ++j) {
    double p = pred_yw[j];
    if (p <= kProbEps || p >= 1.0 - kProbEps) continue;  // clamped: flat
    d[j] = inv_n * (-gt_yw[j] / p + (1.0 - gt_yw[j]) / (1.0 - p));
  }
  return d;
}

namespace {

// Per-column L1 gap between plane projections at predicted and reference
// latitudes. plane_y selects the floor (-1) or ceiling (+h) plane. ddgamma,
// when non-null, receives d(gap)/d(pred latitude); zero when clamped.
double plane_gap(double delta, double gamma_pred, double gamma_gt,
                 double plane_y, double* ddgamma) {
  bool clamped = false;
  double gp = clamp_away_from_horizon(gamma_pred, &clamped);
  double gg = clamp_away_from_horizon(gamma_gt, nullptr);
  // The clamp already enforces the real guard; project with a looser one so
  // the clamp edge itself stays projectable.
  Point3 p = project_to_plane({delta, gp}, plane_y, 0.5 * kGammaMin);
  Point3 g = project_to_plane({delta, gg}, plane_y, 0.5 * kGammaMin);
  double gap = std::abs(p.x - g.x) + std::abs(p.y - g.y) + std::abs(p.z - g.z);
  if (ddgamma) {
    if (clamped) {
      *ddgamma = 0.0;
    } else {
      // p = (plane_y cot(g) sin d, plane_y, plane_y cot(g) cos d)
      double dcot = -1.0 / (std::sin(gp) * std::sin(gp));
      double sx = p.x > g.x ? 1.0 : (p.x < g.x ? -1.0 : 0.0);
      double sz = p.z > g.z ? 1.0 : (p.z < g.z ? -1.0 : 0.0);
      *ddgamma = plane_y * dcot * (sx * std::sin(delta) + sz * std::cos(delta));
    }
  }
  return gap;
}

}  // namespace

double loss_boundary_3d(const LayoutBoundaries& pred,
                        const LayoutBoundaries& gt, double ceil_height_gt) {
  const size_t w = pred.width();
  if (gt.width() != w) throw DimensionError("3d loss: width mismatch");
  double sum = 0;
  for (size_t j = 0; j < w; ++j) {
    double delta = column_longitude(j, w);
    double floor_gap = plane_gap(delta, pred.y_f[j], gt.y_f[j], -1.0, nullptr);
    double ceil_gap =
        plane_gap(delta, pred.y_c[j], gt.y_c[j], ceil_height_gt, nullptr);
    sum += 0.5 * (floor_gap + ceil_gap);
  }
  return sum / double(w);
}

void loss_boundary_3d_backward(const LayoutBoundaries& pred,
                               const LayoutBoundaries& gt,
                               double ceil_height_gt, Tensor& dyc,
                               Tensor& dyf) {
  const size_t w = pred.width();
  const double scale = 0.5 / double(w);
  for (size_t j = 0; j < w; ++j) {
    double delta = column_longitude(j, w);
    double df = 0, dc = 0;
    plane_gap(delta, pred.y_f[j], gt.y_f[j], -1.0, &df);
    plane_gap(delta, pred.y_c[j], gt.y_c[j], ceil_height_gt, &dc);
    dyf[j] += scale * df;
    dyc[j] += scale * dc;
  }
}

double loss_boundary_l1(const LayoutBoundaries& pred,
                        const LayoutBoundaries& gt) {
  const size_t w = pred.width();
  if (gt.width() != w) throw DimensionError("boundary loss: width mismatch");
  double sum = 0;
  for (size_t j = 0; j < w; ++j) {
    sum += 0.5 * (std::abs(pred.y_c[j] - gt.y_c[j]) +
                  std::abs(pred.y_f[j] - gt.y_f[j]));
  }
  return sum / double(w);
}

void loss_boundary_l1_backward(const LayoutBoundaries& pred,
                               const LayoutBoundaries& gt, Tensor& dyc,
                               Tensor& dyf) {
  const size_t w = pred.width();
  const double scale = 0.5 / double(w);
  for (size_t j = 0; j < w; ++j) {
    double ec = pred.y_c[j] - gt.y_c[j];
    double ef = pred.y_f[j] - gt.y_f[j];
    dyc[j] += scale * (ec > 0 ? 1.0 : (ec < 0 ? -1.0 : 0.0));
    dyf[j] += scale * (ef > 0 ? 1.0 : (ef < 0 ? -1.0 : 0.0));
  }
}

double total_loss(const LayoutBoundaries& pred, const LayoutBoundaries& gt,
                  double ceil_height_gt, const LossWeights& weights) {
  double bon = weights.boundary_in_3d
                   ? loss_boundary_3d(pred, gt, ceil_height_gt)
                   : loss_boundary_l1(pred, gt);
  return weights.w_cor * loss_corner(pred.y_w, gt.y_w) + weights.w_bon * bon;
}

void total_loss_backward(const LayoutBoundaries& pred,
                         const LayoutBoundaries& gt, double ceil_height_gt,
                         const LossWeights& weights, Tensor& dyw, Tensor& dyc,
                         Tensor& dyf) {
  const size_t w = pred.width();
  dyw = loss_corner_backward(pred.y_w, gt.y_w);
  for (size_t j = 0; j < w; ++j) dyw[j] *= weights.w_cor;
  dyc = Tensor({w});
  dyf = Tensor({w});
  if (weights.boundary_in_3d) {
    loss_boundary_3d_backward(pred, gt, ceil_height_gt, dyc, dyf);
  } else {
    loss_boundary_l1_backward(pred, gt, dyc, dyf);
  }
  for (size_t j = 0; j < w; ++j) {
    dyc[j] *= weights.w_bon;
    dyf[j] *= weights.w_bon;
  }
}

}  // namespace panokit
