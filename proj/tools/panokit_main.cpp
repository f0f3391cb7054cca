// Command-line front end: synthetic data rendering, edge-map preview,
// toy training, inference, IoU evaluation, and the gradient self-check.
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "panokit/config.hpp"
#include "panokit/dataset.hpp"
#include "panokit/edge_enhance.hpp"
#include "panokit/error.hpp"
#include "panokit/geometry.hpp"
#include "panokit/gradcheck.hpp"
#include "panokit/image_io.hpp"
#include "panokit/model.hpp"
#include "panokit/serialize.hpp"
#include "panokit/threads.hpp"

namespace fs = std::filesystem;
using namespace panokit;

namespace {

// Assembles the run configuration: desk defaults, then preset, then config
// file, then --set overrides, in that order.
RunConfig assemble_config(const std::string& preset,
                          const std::string& config_file,
                          const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!preset.empty()) apply_preset(cfg, preset);
  if (!config_file.empty()) load_config_file(cfg, config_file);
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

Tensor grayscale_preview(const Tensor& channel) {
  double lo = channel[0], hi = channel[0];
  for (size_t i = 0; i < channel.size(); ++i) {
    lo = std::min(lo, channel[i]);
    hi = std::max(hi, channel[i]);
  }
  const double span = hi > lo ? hi - lo : 1.0;
  Tensor img({3, channel.dim(0), channel.dim(1)});
  for (size_t i = 0; i < channel.size(); ++i) {
    const double v = (channel[i] - lo) / span;
    img[i] = v;
    img[channel.size() + i] = v;
    img[2 * channel.size() + i] = v;
  }
  return img;
}

int cmd_enhance(const std::string& input, const std::string& out_dir,
                const FreqMaskParams& params) {
  Tensor image = read_image(input);
  Tensor enhanced = enhance(image, params);
  fs::create_directories(out_dir);
  const std::string stem = fs::path(input).stem().string();
  const char* names[2] = {"ev", "eh"};
  for (size_t k = 0; k < 2; ++k) {
    Tensor channel({image.dim(1), image.dim(2)});
    for (size_t i = 0; i < channel.size(); ++i)
      channel[i] = enhanced[(3 + k) * channel.size() + i];
    const fs::path png = fs::path(out_dir) / (stem + "_" + names[k] + ".png");
    const fs::path raw =
        fs::path(out_dir) / (stem + "_" + names[k] + ".tensor");
    write_image(grayscale_preview(channel), png.string());
    write_tensor_raw(channel, raw.string());
    std::printf("wrote %s and %s\n", png.string().c_str(),
                raw.string().c_str());
  }
  return 0;
}

int cmd_render_gt(const std::string& out_dir, size_t rooms, size_t width,
                  size_t height, unsigned long seed, const std::string& kind) {
  fs::create_directories(out_dir);
  Rng rng(seed);
  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv");
  if (!manifest) throw IoError("cannot write manifest in " + out_dir);
  for (size_t i = 0; i < rooms; ++i) {
    RoomKind rk = kind == "box"   ? RoomKind::Box
                  : kind == "ell" ? RoomKind::LShape
                                  : (i % 2 ? RoomKind::LShape : RoomKind::Box);
    Sample s = synth_room(rng, rk, width, height);
    write_image(s.image, (fs::path(out_dir) / (s.id + ".png")).string());
    write_corner_file(s.annotation,
                      (fs::path(out_dir) / (s.id + ".txt")).string());
    write_boundaries_doc(s.boundaries, corner_columns(s.annotation, width),
                         (fs::path(out_dir) / (s.id + ".layout")).string());
    manifest << s.id << ".png\t" << s.id << ".txt\n";
  }
  std::printf("rendered %zu rooms (%zux%zu) into %s\n", rooms, width, height,
              out_dir.c_str());
  return 0;
}

// An untrained or weak model may light up fewer than 3 corner columns;
// that is a degenerate prediction, not a crash. Its doc gets an empty
// corner list, which eval scores as zero overlap.
std::vector<size_t> peaks_or_empty(const Tensor& y_w) {
  try {
    return peak_find(y_w);
  } catch (const DegenerateLayoutError&) {
    return {};
  }
}

std::vector<Sample> make_rooms(Rng& rng, size_t count, size_t width,
                               size_t height) {
  std::vector<Sample> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i)
    out.push_back(synth_room(rng, i % 2 ? RoomKind::LShape : RoomKind::Box,
                             width, height));
  return out;
}

LabeledImage to_labeled(Sample s) {
  LabeledImage li;
  li.image = std::move(s.image);
  li.target = std::move(s.boundaries);
  li.ceil_height = s.ceil_height;
  li.plan = std::move(s.plan);
  li.id = std::move(s.id);
  return li;
}

int cmd_train_toy(const RunConfig& cfg, bool dump_layouts) {
  const ModelConfig mc = cfg.to_model_config();  // validates early
  if (cfg.batch == 0) throw ConfigError("batch must be positive");
  if (cfg.epochs == 0) throw ConfigError("epochs must be positive");
  if (cfg.train_rooms == 0) throw ConfigError("train_rooms must be positive");

  Rng data_rng(cfg.seed);
  Rng init_rng(cfg.seed + 0x100);
  Rng train_rng(cfg.seed + 0x200);
  Rng aug_rng(cfg.seed + 0x300);

  std::vector<Sample> train_rooms =
      make_rooms(data_rng, cfg.train_rooms, cfg.width, cfg.height);
  std::vector<Sample> held_rooms =
      make_rooms(data_rng, cfg.held_rooms, cfg.width, cfg.height);
  std::vector<LabeledImage> train, held;
  for (const Sample& s : train_rooms) train.push_back(to_labeled(s));
  for (const Sample& s : held_rooms) held.push_back(to_labeled(s));

  ParamStore store;
  PanoModel model(store, mc, init_rng);
  const LossWeights weights = cfg.to_loss_weights();
  const AdamConfig adam = cfg.to_adam();

  fs::create_directories(cfg.out_dir);
  std::ostringstream metrics;
  metrics << "epoch\tloss\theld_iou2d\theld_iou3d\n";

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto t_start = std::chrono::steady_clock::now();
  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fresh augmented copies each epoch, then a seeded shuffle.
    std::vector<LabeledImage> pool;
    if (cfg.augment) {
      pool.reserve(train_rooms.size());
      for (const Sample& s : train_rooms)
        pool.push_back(to_labeled(augment(s, aug_rng, AugmentFlags{})));
    }
    const std::vector<LabeledImage>& source = cfg.augment ? pool : train;
    for (size_t i = order.size(); i > 1; --i) {
      const size_t j = size_t(train_rng.uniform_int(uint64_t(i)));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < source.size(); start += cfg.batch) {
      std::vector<const LabeledImage*> batch;
      for (size_t i = start; i < std::min(start + cfg.batch, source.size());
           ++i)
        batch.push_back(&source[order[i]]);
      loss_sum += train_step(model, store, batch, weights, adam, train_rng) *
                  double(batch.size());
      seen += batch.size();
    }
    const double loss = loss_sum / double(seen);

    char line[160];
    if (!held.empty()) {
      std::vector<const LabeledImage*> held_ptr;
      for (const LabeledImage& li : held) held_ptr.push_back(&li);
      EvalStats es = evaluate_model(model, held_ptr);
      std::snprintf(line, sizeof line, "%zu\t%.10g\t%.6f\t%.6f\n", epoch, loss,
                    es.mean_iou2d, es.mean_iou3d);
      std::printf("epoch %zu  loss %.6g  held iou2d %.4f iou3d %.4f", epoch,
                  loss, es.mean_iou2d, es.mean_iou3d);
    } else {
      std::snprintf(line, sizeof line, "%zu\t%.10g\tnan\tnan\n", epoch, loss);
      std::printf("epoch %zu  loss %.6g", epoch, loss);
    }
    metrics << line;
    std::printf("  [%.1fs]\n",
                std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t_start)
                    .count());
    std::fflush(stdout);
  }

  // Final scores on the clean training set and the held-out set.
  std::vector<const LabeledImage*> train_ptr, held_ptr;
  for (const LabeledImage& li : train) train_ptr.push_back(&li);
  for (const LabeledImage& li : held) held_ptr.push_back(&li);
  EvalStats train_es = evaluate_model(model, train_ptr);
  EvalStats held_es;
  if (!held.empty()) held_es = evaluate_model(model, held_ptr);
  {
    char line[160];
    std::snprintf(line, sizeof line, "final\t%.6f\t%.6f\t%.6f\t%.6f\n",
                  train_es.mean_iou2d, train_es.mean_iou3d, held_es.mean_iou2d,
                  held_es.mean_iou3d);
    metrics << "final\ttrain_iou2d\ttrain_iou3d\theld_iou2d\theld_iou3d\n"
            << line;
    std::printf("%s", line);
  }

  const fs::path out(cfg.out_dir);
  {
    std::ofstream mf(out / "metrics.tsv");
    if (!mf) throw IoError("cannot write metrics in " + cfg.out_dir);
    mf << metrics.str();
  }
  {
    std::ofstream cf(out / "config.txt");
    cf << describe(cfg);
  }
  save_weights(store, (out / "weights.bin").string());
  if (dump_layouts && !held.empty()) {
    fs::create_directories(out / "pred");
    fs::create_directories(out / "gt");
    for (const LabeledImage& li : held) {
      LayoutBoundaries pred = model.predict(li.image);
      write_boundaries_doc(pred, peaks_or_empty(pred.y_w),
                           (out / "pred" / (li.id + ".layout")).string());
      write_boundaries_doc(li.target, peak_find(li.target.y_w),
                           (out / "gt" / (li.id + ".layout")).string());
    }
  }
  std::printf("wrote %s\n", (out / "weights.bin").string().c_str());
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& weights_path,
              const std::string& image_path, const std::string& out_dir) {
  const ModelConfig mc = cfg.to_model_config();
  Rng init_rng(cfg.seed + 0x100);
  ParamStore store;
  PanoModel model(store, mc, init_rng);
  load_weights(store, weights_path);

  Tensor image = read_image(image_path);
  if (image.dim(1) != cfg.height || image.dim(2) != cfg.width)
    image = resize_bilinear(image, cfg.height, cfg.width);
  LayoutBoundaries pred = model.predict(image);

  fs::create_directories(out_dir);
  const std::string stem = fs::path(image_path).stem().string();
  const fs::path doc = fs::path(out_dir) / (stem + ".layout");
  const std::vector<size_t> peaks = peaks_or_empty(pred.y_w);
  write_boundaries_doc(pred, peaks, doc.string());

  std::printf("%s: %zu corner columns:", stem.c_str(), peaks.size());
  for (size_t p : peaks) std::printf(" %zu", p);
  std::printf("\n");
  try {
    FloorPlan plan = boundaries_to_plan(pred);
    std::printf("estimated ceiling height %.3f, floor area %.3f\n",
                plan.ceil_y, polygon_area(plan.vertices));
  } catch (const Error&) {
    std::printf("layout is degenerate (too few corners to close a polygon)\n");
  }
  std::printf("wrote %s\n", doc.string().c_str());
  return 0;
}

struct EvalRow {
  std::string id;
  double iou2d = 0.0, iou3d = 0.0;
  size_t gt_corners = 0;
  bool degenerate = false;
};

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             bool per_sample) {
  auto stems = [](const std::string& dir) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".layout")
        out[e.path().stem().string()] = e.path().string();
    return out;
  };
  const auto preds = stems(pred_dir);
  const auto gts = stems(gt_dir);
  std::vector<std::pair<std::string, std::string>> matched;  // id, pred path
  for (const auto& [id, path] : preds)
    if (gts.count(id)) matched.emplace_back(id, path);
  if (matched.empty())
    throw IoError("no matching ids between " + pred_dir + " and " + gt_dir);

  std::vector<EvalRow> rows(matched.size());
  parallel_for(matched.size(), [&](size_t i) {
    const auto& [id, pred_path] = matched[i];
    EvalRow& row = rows[i];
    row.id = id;
    std::vector<size_t> pred_cols, gt_cols;
    LayoutBoundaries pred = read_boundaries_doc(pred_path, &pred_cols);
    LayoutBoundaries gt = read_boundaries_doc(gts.at(id), &gt_cols);
    FloorPlan gt_plan =
        boundaries_to_floorplan(gt, gt_cols);  // reference must be valid
    row.gt_corners = gt_cols.size();
    try {
      FloorPlan pred_plan = boundaries_to_floorplan(pred, pred_cols);
      row.iou2d = iou2d(pred_plan, gt_plan);
      row.iou3d = iou3d(pred_plan, gt_plan);
    } catch (const DegenerateLayoutError&) {
      row.degenerate = true;  // scored as zero overlap
    } catch (const HorizonDegenerateError&) {
      row.degenerate = true;
    }
  });

  auto bucket = [](size_t corners) {
    return corners < 6 ? "4" : corners < 8 ? "6" : corners < 10 ? "8" : "10+";
  };
  std::map<std::string, std::vector<const EvalRow*>> groups;
  for (const EvalRow& r : rows) groups[bucket(r.gt_corners)].push_back(&r);

  if (per_sample)
    for (const EvalRow& r : rows)
      std::printf("%-24s corners %2zu  iou2d %.4f  iou3d %.4f%s\n",
                  r.id.c_str(), r.gt_corners, r.iou2d, r.iou3d,
                  r.degenerate ? "  (degenerate)" : "");

  std::printf("%-8s %6s %10s %10s\n", "corners", "n", "iou2d", "iou3d");
  double sum2 = 0, sum3 = 0;
  for (const char* name : {"4", "6", "8", "10+"}) {
    auto it = groups.find(name);
    if (it == groups.end()) continue;
    double g2 = 0, g3 = 0;
    for (const EvalRow* r : it->second) {
      g2 += r->iou2d;
      g3 += r->iou3d;
    }
    const double n = double(it->second.size());
    std::printf("%-8s %6zu %10.4f %10.4f\n", name, it->second.size(), g2 / n,
                g3 / n);
  }
  for (const EvalRow& r : rows) {
    sum2 += r.iou2d;
    sum3 += r.iou3d;
  }
  std::printf("%-8s %6zu %10.4f %10.4f\n", "overall", rows.size(),
              sum2 / double(rows.size()), sum3 / double(rows.size()));
  return 0;
}

int cmd_gradcheck(unsigned long seed, bool corrupt) {
  const auto report = run_gradient_suite(seed, corrupt);
  bool ok = true;
  for (const auto& e : report) {
    const bool pass = e.max_rel_err < 1e-4;
    ok = ok && pass;
    std::printf("%-20s max rel err %.3e  %s\n", e.op.c_str(), e.max_rel_err,
                pass ? "ok" : "FAIL");
  }
  std::printf("%s\n", ok ? "all gradients match" : "GRADIENT CHECK FAILED");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panokit: panorama room-layout pipeline"};
  app.require_subcommand(1);
  app.footer(config_keys_help());

  // enhance
  std::string in_image, out_dir = ".";
  FreqMaskParams mask;
  auto* enh = app.add_subcommand(
      "enhance", "write directional edge maps for one panorama");
  enh->add_option("input", in_image, "input image (PNG/JPEG)")->required();
  enh->add_option("--out-dir", out_dir, "output directory");
  enh->add_option("--alpha", mask.alpha, "near-horizontal band edge (deg)");
  enh->add_option("--beta", mask.beta, "near-vertical band edge (deg)");
  enh->add_option("--theta", mask.theta, "radial cutoff (bins at 512 px)");
  enh->add_flag_callback("--no-scale-theta",
                         [&]() { mask.scale_theta = false; },
                         "use theta as-is at any resolution");

  // render-gt
  std::string rg_dir = "gt_rooms", rg_kind = "mix";
  size_t rg_rooms = 8, rg_width = 128, rg_height = 64;
  unsigned long rg_seed = 1234;
  auto* rg = app.add_subcommand(
      "render-gt", "render synthetic rooms with exact reference layouts");
  rg->add_option("--out-dir", rg_dir, "output directory");
  rg->add_option("--rooms", rg_rooms, "how many rooms");
  rg->add_option("--width", rg_width, "image width");
  rg->add_option("--height", rg_height, "image height");
  rg->add_option("--seed", rg_seed, "generator seed");
  rg->add_option("--kind", rg_kind, "box | ell | mix")
      ->check(CLI::IsMember({"box", "ell", "mix"}));

  // shared config plumbing for train-toy and infer
  std::string preset, config_file;
  std::vector<std::string> sets;
  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--preset", preset, "named preset: overfit64 | overfit16");
    cmd->add_option("--config", config_file, "key=value config file");
    cmd->add_option("--set", sets, "override one key, e.g. --set lr=0.001")
        ->take_all();
  };

  bool dump_layouts = false;
  auto* tt = app.add_subcommand(
      "train-toy", "train on synthetic rooms and log loss and held-out IoU");
  add_config_opts(tt);
  tt->add_flag("--dump-layouts", dump_layouts,
               "write held-out predictions and references as layout docs");

  std::string weights_path, infer_image, infer_out = ".";
  auto* inf = app.add_subcommand("infer", "predict one panorama's layout");
  add_config_opts(inf);
  inf->add_option("--weights", weights_path, "checkpoint from train-toy")
      ->required();
  inf->add_option("--image", infer_image, "input panorama")->required();
  inf->add_option("--out-dir", infer_out, "where to write the layout doc");

  std::string pred_dir, gt_dir;
  bool per_sample = false;
  auto* ev = app.add_subcommand(
      "eval", "score predicted layout docs against references");
  ev->add_option("--pred", pred_dir, "directory of predicted .layout docs")
      ->required();
  ev->add_option("--gt", gt_dir, "directory of reference .layout docs")
      ->required();
  ev->add_flag("--per-sample", per_sample, "print one line per sample");

  unsigned long gc_seed = 42;
  bool gc_corrupt = false;
  auto* gc = app.add_subcommand(
      "gradcheck", "compare every backward pass against central differences");
  gc->add_option("--seed", gc_seed, "probe seed");
  gc->add_flag("--corrupt-backward", gc_corrupt,
               "deliberately break one gradient (negative control)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*enh) return cmd_enhance(in_image, out_dir, mask);
    if (*rg)
      return cmd_render_gt(rg_dir, rg_rooms, rg_width, rg_height, rg_seed,
                           rg_kind);
    if (*tt) return cmd_train_toy(assemble_config(preset, config_file, sets),
                                  dump_layouts);
    if (*inf)
      return cmd_infer(assemble_config(preset, config_file, sets),
                       weights_path, infer_image, infer_out);
    if (*ev) return cmd_eval(pred_dir, gt_dir, per_sample);
    if (*gc) return cmd_gradcheck(gc_seed, gc_corrupt);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const InvalidAnnotationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 1;
  }
  return 2;
}
