#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "panokit/error.hpp"
#include "panokit/geometry.hpp"
#include "panokit/gradcheck.hpp"
#include "panokit/layout_head.hpp"
#include "panokit/nn.hpp"
#include "panokit/rng.hpp"
#include "panokit/tensor.hpp"
#include "test_util.hpp"

using namespace panokit;
using testutil::max_abs_diff;
using testutil::rand_tensor;

namespace {

constexpr double kPi = 3.141592653589793;

LayoutHeadConfig tiny_config() {
  LayoutHeadConfig cfg;
  cfg.d_model = 8;
  cfg.scale_widths = {8, 4};
  cfg.out_width = 16;
  return cfg;
}

LayoutBoundaries make_boundaries(size_t w, double c, double f) {
  LayoutBoundaries b;
  b.y_c = Tensor::full({w}, c);
  b.y_f = Tensor::full({w}, f);
  b.y_w = Tensor({w});
  return b;
}

// Reference targets kept away from the head's initial boundaries so no L1
// term sits on a sign change during the finite-difference runs.
LayoutBoundaries smooth_gt(size_t w) {
  LayoutBoundaries gt;
  gt.y_c = Tensor({w});
  gt.y_f = Tensor({w});
  gt.y_w = Tensor({w});
  for (size_t j = 0; j < w; ++j) {
    gt.y_c[j] = 0.45 + 0.1 * std::sin(2 * kPi * double(j) / double(w));
    gt.y_f[j] = -0.9 + 0.05 * std::cos(2 * kPi * double(j) / double(w));
  }
  gt.y_w[3] = 1.0;
  gt.y_w[w - 5] = 1.0;
  return gt;
}

}  // namespace

TEST_CASE("untrained head starts with in-range boundaries") {
  LayoutHeadConfig cfg = tiny_config();
  Rng rng(11);
  ParamStore store;
  LayoutHead head(store, "head", cfg, rng);

  Param* b3 = store.find("head.conv3.b");
  REQUIRE(b3 != nullptr);
  CHECK(b3->value[0] == 0.0);
  CHECK(b3->value[1] == 0.5);
  CHECK(b3->value[2] == -0.5);

  // Zero last-layer weights: the bias alone sets the outputs.
  Param* w3 = store.find("head.conv3.w");
  w3->value = Tensor(w3->value.shape());
  Rng drng(12);
  Tensor feat = rand_tensor({12, 8}, drng);
  LayoutBoundaries out = head.forward(feat, false, nullptr);
  const double lat0 = (kPi / 2) * std::tanh(0.5);
  for (size_t j = 0; j < 16; ++j) {
    CHECK(out.y_w[j] == 0.5);
    CHECK_CLOSE(out.y_c[j], lat0, 1e-12);
    CHECK_CLOSE(out.y_f[j], -lat0, 1e-12);
  }

  // Zeroing the bias too shows the degenerate horizon limit it guards.
  b3->value = Tensor({3});
  LayoutBoundaries flat = head.forward(feat, false, nullptr);
  for (size_t j = 0; j < 16; ++j) {
    CHECK(flat.y_w[j] == 0.5);
    CHECK(flat.y_c[j] == 0.0);
    CHECK(flat.y_f[j] == 0.0);
  }

  // Fresh random head: activation keeps every column inside the open ranges.
  ParamStore store2;
  Rng rng2(13);
  LayoutHead head2(store2, "head", tiny_config(), rng2);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor f = rand_tensor({12, 8}, drng, -2.0, 2.0);
    LayoutBoundaries o = head2.forward(f, false, nullptr);
    for (size_t j = 0; j < 16; ++j) {
      CHECK(o.y_w[j] > 0.0);
      CHECK(o.y_w[j] < 1.0);
      CHECK(o.y_c[j] > 0.0);
      CHECK(o.y_c[j] < kPi / 2);
      CHECK(o.y_f[j] < 0.0);
      CHECK(o.y_f[j] > -kPi / 2);
    }
  }
}

TEST_CASE("desk-scale shape contract") {
  LayoutHeadConfig cfg;  // 256 wide, widths 64/32/16/8, out 128
  Rng rng(21);
  ParamStore store;
  LayoutHead head(store, "head", cfg, rng);
  Rng drng(22);
  Tensor feat = rand_tensor({120, 256}, drng);
  LayoutBoundaries out = head.forward(feat, false, nullptr);
  REQUIRE(out.width() == 128);
  for (size_t j = 0; j < 128; ++j) {
    REQUIRE(std::isfinite(out.y_w[j]));
    REQUIRE(std::isfinite(out.y_c[j]));
    REQUIRE(std::isfinite(out.y_f[j]));
  }
  CHECK_THROWS_AS(head.forward(Tensor({119, 256}), false, nullptr),
                  DimensionError);
  CHECK_THROWS_AS(head.forward(Tensor({120, 255}), false, nullptr),
                  DimensionError);
}

TEST_CASE("rolling the scales proportionally rolls the output exactly") {
  LayoutHeadConfig cfg = tiny_config();
  Rng rng(31);
  ParamStore store;
  LayoutHead head(store, "head", cfg, rng);
  Rng drng(32);
  Tensor feat = rand_tensor({12, 8}, drng);

  const size_t d_out = 4;  // output roll; per-scale rolls 2 and 1
  Tensor rolled({12, 8});
  size_t row0 = 0;
  for (size_t k = 0; k < cfg.scale_widths.size(); ++k) {
    size_t sk = cfg.scale_widths[k];
    size_t rk = d_out * sk / cfg.out_width;
    for (size_t j = 0; j < sk; ++j)
      for (size_t c = 0; c < 8; ++c)
        rolled.at(row0 + j, c) = feat.at(row0 + (j + sk - rk) % sk, c);
    row0 += sk;
  }

  LayoutBoundaries base = head.forward(feat, false, nullptr);
  LayoutBoundaries moved = head.forward(rolled, false, nullptr);
  for (size_t j = 0; j < cfg.out_width; ++j) {
    size_t src = (j + cfg.out_width - d_out) % cfg.out_width;
    CHECK(moved.y_w[j] == base.y_w[src]);
    CHECK(moved.y_c[j] == base.y_c[src]);
    CHECK(moved.y_f[j] == base.y_f[src]);
  }
}

TEST_CASE("corner loss: clamped cross-entropy") {
  Tensor exact({4});
  exact[0] = 1.0;
  exact[1] = 0.0;
  exact[2] = 1.0;
  exact[3] = 0.0;
  CHECK_CLOSE(loss_corner(exact, exact), 0.0, 2e-7);

  // A constant 0.5 predictor always costs ln 2.
  Tensor half = Tensor::full({5}, 0.5);
  for (double g : {0.0, 1.0, 0.3}) {
    CHECK_CLOSE(loss_corner(half, Tensor::full({5}, g)),
                0.6931471805599453, 1e-12);
  }

  Tensor pred({2}), gt({2});
  pred[0] = 0.9;
  pred[1] = 0.1;
  gt[0] = 1.0;
  gt[1] = 0.0;
  CHECK_CLOSE(loss_corner(pred, gt), 0.10536051565782628, 1e-12);

  CHECK_THROWS_AS(loss_corner(pred, Tensor({3})), DimensionError);

  // Gradient against central differences.
  Rng rng(41);
  Tensor p = rand_tensor({9}, rng, 0.05, 0.95);
  Tensor g = rand_tensor({9}, rng, 0.0, 1.0);
  Tensor got = loss_corner_backward(p, g);
  Tensor num = finite_diff_grad(
      [&](const Tensor& v) { return loss_corner(v, g); }, p);
  CHECK(grad_rel_error(got, num) < 1e-6);
}

TEST_CASE("3d boundary loss: projected gaps with horizon clamping") {
  // Single column at longitude 0: floor points (0,-1,1) vs (0,-1,2).
  LayoutBoundaries pred = make_boundaries(1, 0.6, -kPi / 4);
  LayoutBoundaries gt = make_boundaries(1, 0.6, -std::atan(0.5));
  CHECK_CLOSE(loss_boundary_3d(pred, gt, 1.0), 0.5, 1e-12);

  // Matching boundaries cost nothing.
  CHECK(loss_boundary_3d(gt, gt, 1.3) == 0.0);

  // The same latitude error is pricier near the horizon than near nadir.
  const double dg = 0.05;
  auto floor_cost = [&](double g) {
    LayoutBoundaries a = make_boundaries(1, 0.5, -g);
    LayoutBoundaries b = make_boundaries(1, 0.5, -(g + dg));
    return loss_boundary_3d(a, b, 1.0);
  };
  CHECK(floor_cost(kPi / 4) > floor_cost(80.0 * kPi / 180.0));
  double prev = floor_cost(0.1);
  for (double g = 0.15; g < 1.5; g += 0.05) {
    double cur = floor_cost(g);
    CHECK(cur < prev);
    prev = cur;
  }

  // Latitudes inside the guard band clamp to its edge: same fixed penalty,
  // no gradient.
  LayoutBoundaries inside = make_boundaries(1, 0.5, -1e-5);
  LayoutBoundaries edge = make_boundaries(1, 0.5, -kGammaMin);
  LayoutBoundaries target = make_boundaries(1, 0.5, -0.5);
  CHECK(loss_boundary_3d(inside, target, 1.0) ==
        loss_boundary_3d(edge, target, 1.0));
  Tensor dyc({1}), dyf({1});
  loss_boundary_3d_backward(inside, target, 1.0, dyc, dyf);
  CHECK(dyf[0] == 0.0);
  Tensor dyc2({1}), dyf2({1});
  loss_boundary_3d_backward(target, edge, 1.0, dyc2, dyf2);
  CHECK(dyf2[0] != 0.0);

  // Random case: nonnegative, zero only on equality, gradient matches
  // finite differences.
  Rng rng(51);
  const size_t w = 8;
  LayoutBoundaries a, b;
  a.y_c = rand_tensor({w}, rng, 0.3, 0.9);
  a.y_f = rand_tensor({w}, rng, -1.1, -0.5);
  a.y_w = Tensor({w});
  b.y_c = rand_tensor({w}, rng, 1.0, 1.3);
  b.y_f = rand_tensor({w}, rng, -0.45, -0.2);
  b.y_w = Tensor({w});
  double l = loss_boundary_3d(a, b, 1.2);
  CHECK(l > 0.0);

  Tensor gc({w}), gf({w});
  loss_boundary_3d_backward(a, b, 1.2, gc, gf);
  Tensor num_c = finite_diff_grad(
      [&](const Tensor& v) {
        LayoutBoundaries t = a;
        t.y_c = v;
        return loss_boundary_3d(t, b, 1.2);
      },
      a.y_c);
  Tensor num_f = finite_diff_grad(
      [&](const Tensor& v) {
        LayoutBoundaries t = a;
        t.y_f = v;
        return loss_boundary_3d(t, b, 1.2);
      },
      a.y_f);
  CHECK(grad_rel_error(gc, num_c) < 1e-5);
  CHECK(grad_rel_error(gf, num_f) < 1e-5);
}

TEST_CASE("latitude-space alternative and the weighted total") {
  LayoutBoundaries pred = make_boundaries(2, 0.6, -0.8);
  LayoutBoundaries gt = make_boundaries(2, 0.5, -0.7);
  // (|0.1| + |0.1|)/2 per column.
  CHECK_CLOSE(loss_boundary_l1(pred, gt), 0.1, 1e-12);

  Tensor dyc({2}), dyf({2});
  loss_boundary_l1_backward(pred, gt, dyc, dyf);
  for (size_t j = 0; j < 2; ++j) {
    CHECK_CLOSE(dyc[j], 0.25, 1e-15);   // sign(+0.1) * 0.5 / 2
    CHECK_CLOSE(dyf[j], -0.25, 1e-15);
  }

  pred.y_w = Tensor::full({2}, 0.5);
  gt.y_w[0] = 1.0;

  LossWeights only_bon;
  only_bon.w_cor = 0.0;
  CHECK(total_loss(pred, gt, 1.0, only_bon) ==
        loss_boundary_3d(pred, gt, 1.0));

  LossWeights defaults;
  CHECK_CLOSE(total_loss(pred, gt, 1.0, defaults),
              loss_corner(pred.y_w, gt.y_w) + loss_boundary_3d(pred, gt, 1.0),
              1e-15);

  LossWeights flat;
  flat.boundary_in_3d = false;
  CHECK_CLOSE(total_loss(pred, gt, 1.0, flat),
              loss_corner(pred.y_w, gt.y_w) + 0.1, 1e-12);

  // Identical boundaries with exact {0,1} corner targets: only the clamping
  // epsilon remains.
  LayoutBoundaries same = gt;
  CHECK_CLOSE(total_loss(same, gt, 1.0, defaults), 0.0, 2e-7);
}

TEST_CASE("head gradients through the total loss match finite differences") {
  LayoutHeadConfig cfg = tiny_config();
  Rng rng(61);
  ParamStore store;
  LayoutHead head(store, "head", cfg, rng);
  Rng drng(62);
  Tensor feat = rand_tensor({12, 8}, drng);
  LayoutBoundaries gt = smooth_gt(cfg.out_width);
  const double h_gt = 1.2;
  LossWeights weights;

  auto loss = [&]() {
    LayoutBoundaries out = head.forward(feat, true, nullptr, false);
    return total_loss(out, gt, h_gt, weights);
  };

  HeadCache cache;
  LayoutBoundaries out = head.forward(feat, true, &cache, false);
  Tensor dyw, dyc, dyf;
  total_loss_backward(out, gt, h_gt, weights, dyw, dyc, dyf);
  store.zero_grads();
  Tensor dfeat = head.backward(cache, dyw, dyc, dyf);

  Tensor num_feat = finite_diff_grad(
      [&](const Tensor& v) {
        Tensor saved = feat;
        feat = v;
        double l = loss();
        feat = saved;
        return l;
      },
      feat);
  CHECK(grad_rel_error(dfeat, num_feat) < 1e-4);

  // Biases feeding straight into a batch norm are mean-subtracted away, so
  // their true gradient is identically zero; check that instead of a
  // relative error against finite-difference noise.
  for (const char* name : {"head.conv1.b", "head.conv2.b"}) {
    Param* p = store.find(name);
    REQUIRE(p != nullptr);
    double worst = 0;
    for (size_t i = 0; i < p->grad.size(); ++i)
      worst = std::max(worst, std::abs(p->grad[i]));
    CHECK(worst < 1e-10);
  }

  for (const char* name : {"head.squeeze.w", "head.conv1.w", "head.bn2.gain",
                           "head.conv3.w", "head.conv3.b", "head.bn1.gain",
                           "head.bn2.bias"}) {
    Param* p = store.find(name);
    REQUIRE(p != nullptr);
    Tensor saved = p->value;
    Tensor num = finite_diff_grad(
        [&](const Tensor& v) {
          p->value = v;
          return loss();
        },
        saved);
    p->value = saved;
    CHECK(grad_rel_error(p->grad, num) < 1e-4);
  }

  // The latitude-L1 alternative trains through the same path.
  weights.boundary_in_3d = false;
  HeadCache cache2;
  LayoutBoundaries out2 = head.forward(feat, true, &cache2, false);
  Tensor dyw2, dyc2, dyf2;
  total_loss_backward(out2, gt, h_gt, weights, dyw2, dyc2, dyf2);
  store.zero_grads();
  Tensor dfeat2 = head.backward(cache2, dyw2, dyc2, dyf2);
  Tensor num2 = finite_diff_grad(
      [&](const Tensor& v) {
        Tensor saved = feat;
        feat = v;
        double l = loss();
        feat = saved;
        return l;
      },
      feat);
  CHECK(grad_rel_error(dfeat2, num2) < 1e-4);

  // Folding the deferred normalization stats changes later eval passes.
  LayoutBoundaries before = head.forward(feat, false, nullptr);
  head.fold_norm_stats(cache);
  LayoutBoundaries after = head.forward(feat, false, nullptr);
  CHECK(max_abs_diff(before.y_c, after.y_c) > 0.0);
}
