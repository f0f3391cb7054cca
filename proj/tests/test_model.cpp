#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "panokit/error.hpp"
#include "panokit/model.hpp"
#include "panokit/serialize.hpp"
#include "test_util.hpp"

using namespace panokit;
using testutil::max_abs_diff;

namespace {

// Small enough for finite differences, large enough that every stage (two
// pyramid scales, image patches, both encoder blocks) carries signal.
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.width = 32;
  cfg.height = 16;
  cfg.backbone.channels = {4, 6};
  cfg.patching.d_model = 8;
  cfg.patching.patch = 8;
  cfg.patching.d_hidden = 6;
  cfg.encoder.layers = 2;
  cfg.encoder.heads = 2;
  cfg.encoder.mlp_factor = 2;
  cfg.finalize();
  return cfg;
}

Tensor rand_image(Rng& rng, size_t h, size_t w) {
  Tensor img({3, h, w});
  for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
  return img;
}

// Smooth targets: latitudes kept away from both the untrained head's output
// (+- (pi/2) tanh(0.5)) and the horizon guard, so L1 terms never sit on a
// sign kink during finite differencing.
LayoutBoundaries smooth_target(size_t w) {
  LayoutBoundaries gt(w);
  for (size_t j = 0; j < w; ++j) {
    double t = 2.0 * M_PI * double(j) / double(w);
    gt.y_c[j] = 0.45 + 0.10 * std::sin(t);
    gt.y_f[j] = -0.95 + 0.05 * std::cos(t);
    gt.y_w[j] = (j % (w / 4) == 1) ? 0.9 : 0.05;
  }
  return gt;
}

Tensor roll_image(const Tensor& img, size_t delta) {
  Tensor out(img.shape());
  size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  for (size_t c = 0; c < C; ++c)
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x)
        out.at(c, y, (x + delta) % W) = img.at(c, y, x);
  return out;
}

double fd_component(const std::function<double()>& f, Tensor& t, size_t idx,
                    double h = 1e-5) {
  const double keep = t[idx];
  t[idx] = keep + h;
  const double up = f();
  t[idx] = keep - h;
  const double down = f();
  t[idx] = keep;
  return (up - down) / (2.0 * h);
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("forward contract: shapes, ranges, determinism") {
  ModelConfig cfg = tiny_config();
  CHECK(cfg.backbone.in_channels == 5);
  CHECK(cfg.patching.image_channels == 5);
  CHECK(cfg.patching.feature_channels == std::vector<size_t>{4, 6});
  CHECK(cfg.head.scale_widths == std::vector<size_t>{16, 8});
  CHECK(cfg.head.out_width == 32);
  CHECK(cfg.encoder.d_model == 8);

  ParamStore store;
  Rng rng(11);
  PanoModel model(store, cfg, rng);
  CHECK(model.randinit_bound() == 16);

  Rng drng(7);
  Tensor img = rand_image(drng, 16, 32);
  LayoutBoundaries out = model.predict(img);
  REQUIRE(out.width() == 32);
  for (size_t j = 0; j < out.width(); ++j) {
    CHECK(out.y_c[j] > 0.0);
    CHECK(out.y_c[j] < M_PI / 2);
    CHECK(out.y_f[j] < 0.0);
    CHECK(out.y_f[j] > -M_PI / 2);
    CHECK(out.y_w[j] > 0.0);
    CHECK(out.y_w[j] < 1.0);
  }

  // predict is the eval-mode forward, and eval mode is deterministic.
  LayoutBoundaries again =
      model.forward(img, false, 0, nullptr, /*update_running=*/false);
  CHECK(max_abs_diff(out.y_c, again.y_c) == 0.0);
  CHECK(max_abs_diff(out.y_f, again.y_f) == 0.0);
  CHECK(max_abs_diff(out.y_w, again.y_w) == 0.0);

  CHECK_THROWS_AS(model.predict(Tensor({3, 16, 16})), DimensionError);
  CHECK_THROWS_AS(model.predict(Tensor({1, 16, 32})), DimensionError);

  ModelConfig bad = tiny_config();
  bad.height = 20;  // not divisible by 2^(blocks+1)
  CHECK_THROWS_AS(bad.finalize(), ConfigError);
  bad = tiny_config();
  bad.patching.patch = 12;
  CHECK_THROWS_AS(bad.finalize(), ConfigError);
  bad = tiny_config();
  bad.encoder.heads = 3;
  CHECK_THROWS_AS(bad.finalize(), ConfigError);
}

TEST_CASE("every stage's parameters match finite differences") {
  ModelConfig cfg = tiny_config();
  ParamStore store;
  Rng rng(21);
  PanoModel model(store, cfg, rng);

  Rng drng(22);
  Tensor img = rand_image(drng, cfg.height, cfg.width);
  LayoutBoundaries gt = smooth_target(cfg.width);
  const double ceil_h = 1.2;
  const LossWeights weights;
  const long randinit = 2;

  auto loss = [&]() {
    LayoutBoundaries pred =
        model.forward(img, true, randinit, nullptr, /*update_running=*/false);
    return total_loss(pred, gt, ceil_h, weights);
  };

  store.zero_grads();
  ModelCache cache;
  LayoutBoundaries pred =
      model.forward(img, true, randinit, &cache, /*update_running=*/false);
  Tensor dyw({cfg.width}), dyc({cfg.width}), dyf({cfg.width});
  total_loss_backward(pred, gt, ceil_h, weights, dyw, dyc, dyf);
  model.backward(cache, dyw, dyc, dyf);

  const std::vector<std::string> sampled = {
      "backbone.b0.conv1.w", "backbone.b0.strip_row.w",
      "backbone.b0.norm.gain", "backbone.b1.conv2.w", "backbone.b1.conv2.b",
      "embed.f0.w", "embed.f1.w", "embed.img1.w", "embed.img2.b", "embed.row",
      "encoder.b0.attn.q.w", "encoder.b0.mlp1.w", "encoder.b1.ln1.gain",
      "encoder.ln.bias", "head.squeeze.w", "head.bn1.gain", "head.conv3.w",
      "head.conv3.b"};
  for (const std::string& name : sampled) {
    CAPTURE(name);
    Param* p = store.find(name);
    REQUIRE(p != nullptr);
    const std::vector<size_t> picks = {0, p->value.size() / 2,
                                       p->value.size() - 1};
    for (size_t idx : picks) {
      CAPTURE(idx);
      const double numeric = fd_component(loss, p->value, idx);
      const double analytic = p->grad[idx];
      CAPTURE(analytic);
      CAPTURE(numeric);
      // Components whose true gradient is ~1e-8 hit central-difference
      // cancellation before 1e-4 relative precision; for those, agreement to
      // 1e-10 absolute is still far below any plausible backward defect.
      const bool ok =
          rel_err(analytic, numeric) < 1e-4 || std::abs(analytic - numeric) < 1e-10;
      CHECK(ok);
    }
  }

  // Biases feeding straight into a batch norm have identically zero true
  // gradient (the batch mean absorbs per-channel constants), so they are
  // checked as a property rather than by relative error.
  for (std::string name : {"backbone.b0.conv1.b", "backbone.b1.conv1.b",
                           "head.conv1.b", "head.conv2.b"}) {
    CAPTURE(name);
    Param* p = store.find(name);
    REQUIRE(p != nullptr);
    double peak = 0.0;
    for (size_t i = 0; i < p->grad.size(); ++i)
      peak = std::max(peak, std::abs(p->grad[i]));
    CHECK(peak < 1e-10);
  }
}

TEST_CASE("rolling the panorama rolls the prediction (no position table)") {
  ModelConfig cfg;  // desk defaults, minus the absolute position signal
  cfg.patching.pe_mode = PeMode::None;
  cfg.finalize();

  ParamStore store;
  Rng rng(31);
  PanoModel model(store, cfg, rng);

  Rng drng(32);
  Tensor img = rand_image(drng, cfg.height, cfg.width);
  const size_t delta = cfg.width / 4;

  LayoutBoundaries base = model.predict(img);
  LayoutBoundaries rolled = model.predict(roll_image(img, delta));

  double dev = 0.0;
  for (size_t j = 0; j < cfg.width; ++j) {
    const size_t src = (j + cfg.width - delta) % cfg.width;
    dev = std::max(dev, std::abs(rolled.y_c[j] - base.y_c[src]));
    dev = std::max(dev, std::abs(rolled.y_f[j] - base.y_f[src]));
    dev = std::max(dev, std::abs(rolled.y_w[j] - base.y_w[src]));
  }
  CHECK(dev < 1e-6);
}

TEST_CASE("deferred norm-stat folding equals online updates") {
  ModelConfig cfg = tiny_config();
  ParamStore store_a, store_b;
  Rng rng_a(41), rng_b(41);
  PanoModel model_a(store_a, cfg, rng_a);
  PanoModel model_b(store_b, cfg, rng_b);

  Rng drng(42);
  std::vector<Tensor> imgs;
  for (int i = 0; i < 3; ++i) imgs.push_back(rand_image(drng, 16, 32));

  for (const Tensor& img : imgs) {
    model_a.forward(img, true, 1, nullptr, /*update_running=*/true);
  }
  for (const Tensor& img : imgs) {
    ModelCache cache;
    model_b.forward(img, true, 1, &cache, /*update_running=*/false);
    model_b.fold_norm_stats(cache);
  }

  REQUIRE(store_a.buffers().size() == store_b.buffers().size());
  for (size_t i = 0; i < store_a.buffers().size(); ++i) {
    CHECK(store_a.buffers()[i].first == store_b.buffers()[i].first);
    CHECK(max_abs_diff(*store_a.buffers()[i].second,
                       *store_b.buffers()[i].second) == 0.0);
  }
}

TEST_CASE("optimizer steps reduce the loss, deterministically") {
  auto run = [](std::vector<double>& losses) {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    Rng rng(51);
    PanoModel model(store, cfg, rng);

    Rng drng(52);
    std::vector<LabeledImage> data(2);
    data[0].image = rand_image(drng, 16, 32);
    data[0].target = smooth_target(32);
    data[0].ceil_height = 1.2;
    data[1].image = rand_image(drng, 16, 32);
    data[1].target = smooth_target(32);
    for (size_t j = 0; j < 32; ++j) data[1].target.y_c[j] += 0.2;
    data[1].ceil_height = 0.9;

    std::vector<const LabeledImage*> batch = {&data[0], &data[1]};
    AdamConfig adam;
    adam.lr = 3e-3;
    LossWeights weights;
    Rng trng(53);
    for (int step = 0; step < 30; ++step) {
      losses.push_back(train_step(model, store, batch, weights, adam, trng));
    }

    // Folding ran: running means moved off their zero initialization.
    double moved = 0.0;
    for (const auto& [name, tensor] : store.buffers()) {
      if (name.find("running_mean") == std::string::npos) continue;
      for (size_t i = 0; i < tensor->size(); ++i)
        moved = std::max(moved, std::abs((*tensor)[i]));
    }
    CHECK(moved > 0.0);
  };

  std::vector<double> first, second;
  run(first);
  run(second);
  REQUIRE(first.size() == 30);
  CHECK(first == second);  // same seeds, same arithmetic, bit for bit
  CHECK(first.back() < 0.7 * first.front());

  CHECK_THROWS_AS([&] {
    ModelConfig cfg = tiny_config();
    ParamStore store;
    Rng rng(54);
    PanoModel model(store, cfg, rng);
    AdamConfig adam;
    LossWeights weights;
    Rng trng(55);
    train_step(model, store, {}, weights, adam, trng);
  }(), ConfigError);
}

TEST_CASE("ablation toggles run forward and backward") {
  Rng drng(61);
  Tensor img = rand_image(drng, 16, 32);
  LabeledImage sample;
  sample.image = img;
  sample.target = smooth_target(32);
  sample.ceil_height = 1.1;

  auto exercise = [&](ModelConfig cfg, const LossWeights& weights) {
    ParamStore store;
    Rng rng(62);
    PanoModel model(store, cfg, rng);
    LayoutBoundaries out = model.predict(img);
    for (size_t j = 0; j < out.width(); ++j) {
      CHECK(std::isfinite(out.y_c[j]));
      CHECK(std::isfinite(out.y_f[j]));
      CHECK(std::isfinite(out.y_w[j]));
    }
    AdamConfig adam;
    Rng trng(63);
    const double loss =
        train_step(model, store, {&sample}, weights, adam, trng);
    CHECK(std::isfinite(loss));
  };

  ModelConfig cfg = tiny_config();
  exercise(cfg, LossWeights{});

  cfg = tiny_config();
  cfg.use_edge_channels = false;
  cfg.finalize();
  CHECK(cfg.backbone.in_channels == 3);
  exercise(cfg, LossWeights{});

  cfg = tiny_config();
  cfg.patching.pe_mode = PeMode::Learned;
  cfg.finalize();
  exercise(cfg, LossWeights{});

  cfg = tiny_config();
  cfg.patching.pe_mode = PeMode::None;
  cfg.finalize();
  exercise(cfg, LossWeights{});

  LossWeights flat;
  flat.boundary_in_3d = false;
  exercise(tiny_config(), flat);
}

TEST_CASE("evaluation aggregates IoU without throwing on weak predictions") {
  ModelConfig cfg = tiny_config();
  ParamStore store;
  Rng rng(71);
  PanoModel model(store, cfg, rng);

  Rng drng(72);
  std::vector<LabeledImage> data(2);
  for (LabeledImage& s : data) {
    s.image = rand_image(drng, 16, 32);
    s.target = smooth_target(32);
    s.plan.vertices = {{1.5, 1.0}, {-1.5, 1.0}, {-1.5, -1.0}, {1.5, -1.0}};
    s.plan.floor_y = -1.0;
    s.plan.ceil_y = 1.2;
  }
  std::vector<const LabeledImage*> cases = {&data[0], &data[1]};

  EvalStats stats = evaluate_model(model, cases);
  CHECK(stats.count == 2);
  CHECK(stats.degenerate <= 2);
  CHECK(stats.mean_iou2d >= 0.0);
  CHECK(stats.mean_iou2d <= 1.0);
  CHECK(stats.mean_iou3d >= 0.0);
  CHECK(stats.mean_iou3d <= 1.0);

  EvalStats again = evaluate_model(model, cases);
  CHECK(stats.mean_iou2d == again.mean_iou2d);
  CHECK(stats.mean_iou3d == again.mean_iou3d);
  CHECK(stats.degenerate == again.degenerate);

  EvalStats empty = evaluate_model(model, {});
  CHECK(empty.count == 0);
}

TEST_CASE("weight containers round-trip bit-exactly") {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / "panokit_weights_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.bin").string();

  ModelConfig cfg = tiny_config();
  ParamStore store_a;
  Rng rng_a(81);
  PanoModel model_a(store_a, cfg, rng_a);

  // Train briefly so weights, Adam-moved values, and running stats all
  // differ from initialization.
  Rng drng(82);
  LabeledImage sample;
  sample.image = rand_image(drng, 16, 32);
  sample.target = smooth_target(32);
  AdamConfig adam;
  Rng trng(83);
  train_step(model_a, store_a, {&sample}, LossWeights{}, adam, trng);
  train_step(model_a, store_a, {&sample}, LossWeights{}, adam, trng);

  save_weights(store_a, path);

  ParamStore store_b;
  Rng rng_b(84);  // different seed: different weights until the load
  PanoModel model_b(store_b, cfg, rng_b);
  Tensor probe = rand_image(drng, 16, 32);
  LayoutBoundaries before = model_b.predict(probe);
  LayoutBoundaries want = model_a.predict(probe);
  CHECK(max_abs_diff(before.y_c, want.y_c) > 0.0);

  load_weights(store_b, path);
  LayoutBoundaries after = model_b.predict(probe);
  CHECK(max_abs_diff(after.y_c, want.y_c) == 0.0);
  CHECK(max_abs_diff(after.y_f, want.y_f) == 0.0);
  CHECK(max_abs_diff(after.y_w, want.y_w) == 0.0);

  CHECK_THROWS_AS(load_weights(store_b, (dir / "absent.bin").string()),
                  IoError);

  // Truncated payload: structural checks pass, the byte count does not.
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    const std::string cut = (dir / "cut.bin").string();
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size() - 8));
    out.close();
    fs::copy_file(path + ".json", cut + ".json",
                  fs::copy_options::overwrite_existing);
    CHECK_THROWS_AS(load_weights(store_b, cut), IoError);
  }

  // A store with a different layout must refuse the container.
  {
    ModelConfig other = tiny_config();
    other.patching.d_model = 10;
    other.encoder.heads = 2;
    other.finalize();
    ParamStore store_c;
    Rng rng_c(85);
    PanoModel model_c(store_c, other, rng_c);
    CHECK_THROWS_AS(load_weights(store_c, path), DimensionError);
  }

  fs::remove_all(dir);
}
