#include "panokit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "panokit/backbone.hpp"
#include "panokit/layout_head.hpp"
#include "panokit/nn.hpp"
#include "panokit/ops.hpp"
#include "panokit/patching.hpp"
#include "panokit/rng.hpp"
#include "panokit/transformer.hpp"

namespace panokit {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    double keep = probe[i];
    probe[i] = keep + h;
    double fp = f(probe);
    probe[i] = keep - h;
    double fm = f(probe);
    probe[i] = keep;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double grad_rel_error(const Tensor& a, const Tensor& b, double floor) {
  double diff = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    diff += d * d;
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double denom = std::sqrt(na) + std::sqrt(nb);
  if (denom < floor) denom = floor;
  return std::sqrt(diff) / denom;
}

namespace {

Tensor rand_t(Rng& rng, const std::vector<size_t>& shape, double lo = -1.0,
              double hi = 1.0) {
  Tensor t(shape);
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Numeric gradient of `scalar` with respect to a store-owned parameter:
// each probe writes the perturbed tensor into the parameter and re-runs the
// forward pass.
Tensor param_fd(Param* p, const std::function<double()>& scalar, double h) {
  const Tensor base = p->value;
  Tensor num = finite_diff_grad(
      [&](const Tensor& t) {
        p->value = t;
        return scalar();
      },
      base, h);
  p->value = base;
  return num;
}

// Relative error with a step-size retry ladder. When a probe places a relu
// pre-activation within h of its kink, the central difference averages the
// two one-sided slopes and reports a disagreement whose size does not shrink
// with h — but whose probability does (the channel norms center their
// outputs, so near-zero relu inputs are dense and some straddle is expected
// at any single h). A genuine backward bug disagrees at every step size; a
// straddle clears once h drops below the offending pre-activation. The
// floor keeps structurally zero gradients (e.g. a bias feeding straight into
// a mean-subtracting norm) from rating finite-difference noise as a 100%
// relative disagreement.
double rel_with_retry(const Tensor& analytic,
                      const std::function<Tensor(double)>& numeric_at) {
  double rel = 1e30;
  for (double h : {1e-5, 1e-6, 1e-7}) {
    rel = std::min(rel, grad_rel_error(analytic, numeric_at(h), 1e-5));
    if (rel < 1e-4) break;
  }
  return rel;
}

// Worst error over every parameter registered in the store.
double check_store_params(ParamStore& store,
                          const std::function<double()>& scalar) {
  double worst = 0.0;
  for (const auto& p : store.params()) {
    double rel = rel_with_retry(p->grad, [&](double h) {
      return param_fd(p.get(), scalar, h);
    });
    worst = std::max(worst, rel);
  }
  return worst;
}

LayoutBoundaries rand_boundaries(Rng& rng, size_t w) {
  LayoutBoundaries b(w);
  for (size_t j = 0; j < w; ++j) {
    b.y_w[j] = rng.uniform(0.1, 0.9);
    b.y_c[j] = rng.uniform(0.3, 1.1);   // clear of the horizon guard
    b.y_f[j] = -rng.uniform(0.3, 1.1);
  }
  return b;
}

// A partner whose latitudes differ from `base` by at least 0.05 in every
// column, so the absolute-value kinks of the L1-style losses stay out of
// central-difference reach.
LayoutBoundaries offset_boundaries(Rng& rng, const LayoutBoundaries& base) {
  LayoutBoundaries b(base.width());
  for (size_t j = 0; j < base.width(); ++j) {
    const double sc = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double sf = rng.uniform() < 0.5 ? -1.0 : 1.0;
    b.y_w[j] = rng.uniform(0.1, 0.9);
    b.y_c[j] = std::clamp(base.y_c[j] + sc * rng.uniform(0.05, 0.25), 0.25, 1.2);
    b.y_f[j] = std::clamp(base.y_f[j] + sf * rng.uniform(0.05, 0.25), -1.2, -0.25);
  }
  return b;
}

}  // namespace

std::vector<GradCheckEntry> run_gradient_suite(unsigned long seed,
                                               bool corrupt) {
  std::vector<GradCheckEntry> report;
  Rng rng(seed);

  {  // matmul
    Tensor a = rand_t(rng, {5, 4}), b = rand_t(rng, {4, 6});
    Tensor r = rand_t(rng, {5, 6});
    Tensor da({5, 4}), db({4, 6});
    matmul_backward(a, b, r, da, db);
    auto ja = [&](const Tensor& t) { return dot(matmul(t, b), r); };
    auto jb = [&](const Tensor& t) { return dot(matmul(a, t), r); };
    double err = grad_rel_error(da, finite_diff_grad(ja, a));
    err = std::max(err, grad_rel_error(db, finite_diff_grad(jb, b)));
    report.push_back({"matmul", err});
  }

  {  // conv2d, stride 1 padded and stride 2
    double err = 0.0;
    for (size_t stride : {size_t(1), size_t(2)}) {
      ConvSpec spec;
      spec.stride_h = spec.stride_w = stride;
      spec.pad_h = spec.pad_w = 1;
      Tensor x = rand_t(rng, {3, 5, 6}), k = rand_t(rng, {4, 3, 3, 3});
      Tensor bias = rand_t(rng, {4});
      Tensor out = conv2d(x, k, bias, spec);
      Tensor r = rand_t(rng, out.shape());
      Tensor dx(x.shape()), dk(k.shape()), db(bias.shape());
      conv2d_backward(x, k, spec, r, &dx, &dk, &db);
      if (corrupt && stride == 1) dk[0] += 0.25;  // negative control
      auto jx = [&](const Tensor& t) { return dot(conv2d(t, k, bias, spec), r); };
      auto jk = [&](const Tensor& t) { return dot(conv2d(x, t, bias, spec), r); };
      auto jb = [&](const Tensor& t) { return dot(conv2d(x, k, t, spec), r); };
      err = std::max(err, grad_rel_error(dx, finite_diff_grad(jx, x)));
      err = std::max(err, grad_rel_error(dk, finite_diff_grad(jk, k)));
      err = std::max(err, grad_rel_error(db, finite_diff_grad(jb, bias)));
    }
    report.push_back({"conv2d", err});
  }

  {  // circular horizontal padding
    Tensor x = rand_t(rng, {2, 3, 5});
    Tensor r = rand_t(rng, {2, 3, 9});
    Tensor dx = pad_wrap_x_backward(r, 2);
    auto j = [&](const Tensor& t) { return dot(pad_wrap_x(t, 2), r); };
    report.push_back({"pad_wrap", grad_rel_error(dx, finite_diff_grad(j, x))});
  }

  {  // softmax rows
    Tensor x = rand_t(rng, {4, 7});
    Tensor r = rand_t(rng, {4, 7});
    Tensor dx = softmax_backward(softmax(x), r);
    auto j = [&](const Tensor& t) { return dot(softmax(t), r); };
    report.push_back({"softmax", grad_rel_error(dx, finite_diff_grad(j, x))});
  }

  {  // activations (relu probed away from its kink)
    double err = 0.0;
    for (Act act : {Act::Relu, Act::Gelu, Act::Sigmoid, Act::Tanh}) {
      Tensor x = rand_t(rng, {3, 9});
      if (act == Act::Relu)
        for (size_t i = 0; i < x.size(); ++i)
          if (std::abs(x[i]) < 0.2) x[i] = x[i] < 0 ? -0.2 : 0.2;
      Tensor r = rand_t(rng, {3, 9});
      Tensor dx = activation_backward(x, act, r);
      auto j = [&](const Tensor& t) { return dot(activation(t, act), r); };
      err = std::max(err, grad_rel_error(dx, finite_diff_grad(j, x)));
    }
    report.push_back({"activations", err});
  }

  {  // layer norm
    Tensor x = rand_t(rng, {6, 8}), gain = rand_t(rng, {8}, 0.5, 1.5);
    Tensor bias = rand_t(rng, {8});
    Tensor r = rand_t(rng, {6, 8});
    LayerNormCache cache;
    layer_norm(x, gain, bias, 1e-5, &cache);
    Tensor dx(x.shape()), dg({8}), db({8});
    layer_norm_backward(cache, gain, r, dx, dg, db);
    auto jx = [&](const Tensor& t) { return dot(layer_norm(t, gain, bias), r); };
    auto jg = [&](const Tensor& t) { return dot(layer_norm(x, t, bias), r); };
    auto jb = [&](const Tensor& t) { return dot(layer_norm(x, gain, t), r); };
    double err = grad_rel_error(dx, finite_diff_grad(jx, x));
    err = std::max(err, grad_rel_error(dg, finite_diff_grad(jg, gain)));
    err = std::max(err, grad_rel_error(db, finite_diff_grad(jb, bias)));
    report.push_back({"layer_norm", err});
  }

  {  // endpoint-aligned and circular resampling
    Tensor x = rand_t(rng, {3, 10});
    Tensor r7 = rand_t(rng, {3, 7}), r6 = rand_t(rng, {3, 6});
    Tensor dxl = resize_linear_backward(10, 7, r7);
    auto jl = [&](const Tensor& t) { return dot(resize_linear(t, 7), r7); };
    report.push_back(
        {"resize_linear", grad_rel_error(dxl, finite_diff_grad(jl, x))});
    Tensor dxc = resize_circular_backward(10, 6, r6);
    auto jc = [&](const Tensor& t) { return dot(resize_circular(t, 6), r6); };
    report.push_back(
        {"resize_circular", grad_rel_error(dxc, finite_diff_grad(jc, x))});
  }

  {  // per-channel batch norm, training statistics
    Tensor x = rand_t(rng, {4, 3, 5}), gain = rand_t(rng, {4}, 0.5, 1.5);
    Tensor bias = rand_t(rng, {4});
    Tensor r = rand_t(rng, {4, 3, 5});
    auto fwd = [&](const Tensor& xx, const Tensor& g, const Tensor& b) {
      NormStats stats(4);
      return batch_channel_norm(xx, g, b, stats, true, 0.1, 1e-5, nullptr,
                                false);
    };
    NormStats stats(4);
    BcnCache cache;
    batch_channel_norm(x, gain, bias, stats, true, 0.1, 1e-5, &cache, false);
    Tensor dx(x.shape()), dg({4}), db({4});
    batch_channel_norm_backward(cache, gain, r, dx, dg, db);
    auto jx = [&](const Tensor& t) { return dot(fwd(t, gain, bias), r); };
    auto jg = [&](const Tensor& t) { return dot(fwd(x, t, bias), r); };
    auto jb = [&](const Tensor& t) { return dot(fwd(x, gain, t), r); };
    double err = grad_rel_error(dx, finite_diff_grad(jx, x));
    err = std::max(err, grad_rel_error(dg, finite_diff_grad(jg, gain)));
    err = std::max(err, grad_rel_error(db, finite_diff_grad(jb, bias)));
    report.push_back({"batch_channel_norm", err});
  }

  {  // strip pooling
    Tensor f = rand_t(rng, {3, 4, 5});
    Tensor wr = rand_t(rng, {3, 3, 1, 1}), br = rand_t(rng, {3});
    Tensor wc = rand_t(rng, {3, 3, 1, 1}), bc = rand_t(rng, {3});
    Tensor r = rand_t(rng, {3, 4, 5});
    Tensor df(f.shape()), dwr(wr.shape()), dbr({3}), dwc(wc.shape()), dbc({3});
    strip_pool_backward(f, wr, br, wc, bc, r, df, dwr, dbr, dwc, dbc);
    auto j = [&](const Tensor& ff, const Tensor& a, const Tensor& b,
                 const Tensor& c, const Tensor& d) {
      return dot(strip_pool(ff, a, b, c, d), r);
    };
    double err = rel_with_retry(df, [&](double h) {
      return finite_diff_grad([&](const Tensor& t) { return j(t, wr, br, wc, bc); }, f, h);
    });
    err = std::max(err, rel_with_retry(dwr, [&](double h) {
      return finite_diff_grad([&](const Tensor& t) { return j(f, t, br, wc, bc); }, wr, h);
    }));
    err = std::max(err, rel_with_retry(dbr, [&](double h) {
      return finite_diff_grad([&](const Tensor& t) { return j(f, wr, t, wc, bc); }, br, h);
    }));
    err = std::max(err, rel_with_retry(dwc, [&](double h) {
      return finite_diff_grad([&](const Tensor& t) { return j(f, wr, br, t, bc); }, wc, h);
    }));
    err = std::max(err, rel_with_retry(dbc, [&](double h) {
      return finite_diff_grad([&](const Tensor& t) { return j(f, wr, br, wc, t); }, bc, h);
    }));
    report.push_back({"strip_pool", err});
  }

  {  // convolutional pyramid, input plus every parameter
    ParamStore store;
    BackboneConfig cfg;
    cfg.in_channels = 3;
    cfg.channels = {4, 6};
    Backbone net(store, "bb", cfg, rng);
    Tensor x = rand_t(rng, {3, 16, 32}, 0.0, 1.0);
    std::vector<Tensor> probes{rand_t(rng, {4, 8, 16}),
                               rand_t(rng, {6, 4, 8})};
    auto scalar = [&]() {
      FeaturePyramid pyr = net.forward(x, true, nullptr, false);
      return dot(pyr[0], probes[0]) + dot(pyr[1], probes[1]);
    };
    store.zero_grads();
    BackboneCache cache;
    net.forward(x, true, &cache, false);
    Tensor dx = net.backward(cache, probes);
    double err = rel_with_retry(dx, [&](double h) {
      return finite_diff_grad(
          [&](const Tensor& t) {
            FeaturePyramid pyr = net.forward(t, true, nullptr, false);
            return dot(pyr[0], probes[0]) + dot(pyr[1], probes[1]);
          },
          x, h);
    });
    err = std::max(err, check_store_params(store, scalar));
    report.push_back({"backbone", err});
  }

  {  // multi-head attention
    ParamStore store;
    MultiHeadAttention attn(store, "attn", 8, 2, rng);
    Tensor x = rand_t(rng, {6, 8});
    Tensor r = rand_t(rng, {6, 8});
    auto scalar = [&]() { return dot(attn.forward(x, nullptr), r); };
    store.zero_grads();
    AttnCache cache;
    attn.forward(x, &cache);
    Tensor dx = attn.backward(cache, r);
    double err = rel_with_retry(dx, [&](double h) {
      return finite_diff_grad(
          [&](const Tensor& t) { return dot(attn.forward(t, nullptr), r); }, x,
          h);
    });
    err = std::max(err, check_store_params(store, scalar));
    report.push_back({"attention", err});
  }

  {  // pre-norm residual block
    ParamStore store;
    EncoderConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.mlp_factor = 2;
    EncoderBlock blk(store, "blk", cfg, rng);
    Tensor x = rand_t(rng, {6, 8});
    Tensor r = rand_t(rng, {6, 8});
    auto scalar = [&]() { return dot(blk.forward(x, nullptr), r); };
    store.zero_grads();
    BlockCache cache;
    blk.forward(x, &cache);
    Tensor dx = blk.backward(cache, r);
    double err = rel_with_retry(dx, [&](double h) {
      return finite_diff_grad(
          [&](const Tensor& t) { return dot(blk.forward(t, nullptr), r); }, x,
          h);
    });
    err = std::max(err, check_store_params(store, scalar));
    report.push_back({"encoder_block", err});
  }

  {  // patch embedding (gradients flow to pyramid scales and weights)
    ParamStore store;
    PatchingConfig cfg;
    cfg.d_model = 8;
    cfg.patch = 8;
    cfg.d_hidden = 6;
    cfg.image_channels = 3;
    cfg.image_height = 16;
    cfg.image_width = 32;
    cfg.feature_channels = {4, 6};
    PatchEmbedder embed(store, "pe", cfg, rng);
    FeaturePyramid pyr{rand_t(rng, {4, 8, 16}), rand_t(rng, {6, 4, 8})};
    Tensor img = rand_t(rng, {3, 16, 32}, 0.0, 1.0);
    const long randinit = 3;
    auto run = [&](const FeaturePyramid& p) {
      EmbeddingSequence seq =
          embed.build_sequence(p, sample_image_patches(img, 8), randinit,
                               nullptr);
      return seq.rows;
    };
    Tensor r = rand_t(rng, run(pyr).shape());
    auto scalar = [&]() { return dot(run(pyr), r); };
    store.zero_grads();
    PatchCache cache;
    embed.build_sequence(pyr, sample_image_patches(img, 8), randinit, &cache);
    std::vector<Tensor> dpyr = embed.backward(cache, r);
    double err = 0.0;
    for (size_t k = 0; k < pyr.size(); ++k) {
      err = std::max(err, rel_with_retry(dpyr[k], [&](double h) {
        return finite_diff_grad(
            [&](const Tensor& t) {
              FeaturePyramid p = pyr;
              p[k] = t;
              return dot(run(p), r);
            },
            pyr[k], h);
      }));
    }
    err = std::max(err, check_store_params(store, scalar));
    report.push_back({"patch_embed", err});
  }

  {  // boundary head
    ParamStore store;
    LayoutHeadConfig cfg;
    cfg.d_model = 8;
    cfg.scale_widths = {8, 4};
    cfg.out_width = 16;
    LayoutHead head(store, "head", cfg, rng);
    Tensor feat = rand_t(rng, {12, 8});
    Tensor rw = rand_t(rng, {16}), rc = rand_t(rng, {16}), rf = rand_t(rng, {16});
    auto scalar = [&]() {
      LayoutBoundaries out = head.forward(feat, true, nullptr, false);
      return dot(out.y_w, rw) + dot(out.y_c, rc) + dot(out.y_f, rf);
    };
    store.zero_grads();
    HeadCache cache;
    head.forward(feat, true, &cache, false);
    Tensor dfeat = head.backward(cache, rw, rc, rf);
    double err = rel_with_retry(dfeat, [&](double h) {
      return finite_diff_grad(
          [&](const Tensor& t) {
            LayoutBoundaries out = head.forward(t, true, nullptr, false);
            return dot(out.y_w, rw) + dot(out.y_c, rc) + dot(out.y_f, rf);
          },
          feat, h);
    });
    err = std::max(err, check_store_params(store, scalar));
    report.push_back({"layout_head", err});
  }

  {  // corner-probability loss
    Tensor pred = rand_t(rng, {16}, 0.05, 0.95);
    Tensor gt({16});
    for (size_t j = 0; j < 16; ++j) gt[j] = (j % 5 == 1) ? 1.0 : 0.0;
    Tensor d = loss_corner_backward(pred, gt);
    auto j = [&](const Tensor& t) { return loss_corner(t, gt); };
    report.push_back(
        {"loss_corner", grad_rel_error(d, finite_diff_grad(j, pred))});
  }

  {  // boundary losses, 3-D and flat
    const size_t w = 16;
    LayoutBoundaries pred = rand_boundaries(rng, w);
    LayoutBoundaries gt = offset_boundaries(rng, pred);
    const double ceil_h = 1.3;
    Tensor dyc({w}), dyf({w});
    loss_boundary_3d_backward(pred, gt, ceil_h, dyc, dyf);
    auto j3 = [&](const Tensor& t, bool is_c) {
      LayoutBoundaries p = pred;
      (is_c ? p.y_c : p.y_f) = t;
      return loss_boundary_3d(p, gt, ceil_h);
    };
    double err = grad_rel_error(
        dyc, finite_diff_grad([&](const Tensor& t) { return j3(t, true); },
                              pred.y_c));
    err = std::max(err, grad_rel_error(dyf, finite_diff_grad(
        [&](const Tensor& t) { return j3(t, false); }, pred.y_f)));
    report.push_back({"loss_boundary_3d", err});

    Tensor lc({w}), lf({w});
    loss_boundary_l1_backward(pred, gt, lc, lf);
    auto jl = [&](const Tensor& t, bool is_c) {
      LayoutBoundaries p = pred;
      (is_c ? p.y_c : p.y_f) = t;
      return loss_boundary_l1(p, gt);
    };
    err = grad_rel_error(
        lc, finite_diff_grad([&](const Tensor& t) { return jl(t, true); },
                             pred.y_c));
    err = std::max(err, grad_rel_error(lf, finite_diff_grad(
        [&](const Tensor& t) { return jl(t, false); }, pred.y_f)));
    report.push_back({"loss_boundary_l1", err});
  }

  {  // combined training loss
    const size_t w = 16;
    LayoutBoundaries pred = rand_boundaries(rng, w);
    LayoutBoundaries gt = offset_boundaries(rng, pred);
    for (size_t j = 0; j < w; ++j) gt.y_w[j] = (j % 4 == 2) ? 1.0 : 0.0;
    const double ceil_h = 1.2;
    LossWeights weights;
    Tensor dyw({w}), dyc({w}), dyf({w});
    total_loss_backward(pred, gt, ceil_h, weights, dyw, dyc, dyf);
    auto j = [&](const Tensor& t, int which) {
      LayoutBoundaries p = pred;
      (which == 0 ? p.y_w : which == 1 ? p.y_c : p.y_f) = t;
      return total_loss(p, gt, ceil_h, weights);
    };
    double err = grad_rel_error(dyw, finite_diff_grad(
        [&](const Tensor& t) { return j(t, 0); }, pred.y_w));
    err = std::max(err, grad_rel_error(dyc, finite_diff_grad(
        [&](const Tensor& t) { return j(t, 1); }, pred.y_c)));
    err = std::max(err, grad_rel_error(dyf, finite_diff_grad(
        [&](const Tensor& t) { return j(t, 2); }, pred.y_f)));
    report.push_back({"total_loss", err});
  }

  return report;
}

}  // namespace panokit
