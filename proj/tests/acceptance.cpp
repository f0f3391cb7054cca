// Release gate: nine checks, one line each. Every check re-derives its
// reference independently of the code under test (naive DFT, scanline
// rasterizer, finite differences, closed-form identities) or measures an
// end-to-end property on the real pipeline. Exit 0 only when all pass.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "panokit/config.hpp"
#include "panokit/dataset.hpp"
#include "panokit/edge_enhance.hpp"
#include "panokit/geometry.hpp"
#include "panokit/gradcheck.hpp"
#include "panokit/layout_head.hpp"
#include "panokit/model.hpp"
#include "panokit/patching.hpp"
#include "panokit/rng.hpp"
#include "panokit/tensor.hpp"

using namespace panokit;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, bool ok, const std::string& what,
            const std::string& detail) {
  std::printf("criterion %d: %s  %s (%s)\n", idx, ok ? "PASS" : "FAIL",
              what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double now_seconds() {
  static const auto start = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---- 1: spectrum against a direct O(N^4) transform -------------------------

void check_fft() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double worst = 0.0, worst_rt = 0.0;
  for (auto [h, w] : {std::pair<size_t, size_t>{8, 8}, {7, 9}}) {
    Tensor x({h, w});
    for (size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    Spectrum s = fft2(x);
    // Direct sum, one output bin at a time. Bin (u,v) holds frequency
    // (u - h/2, v - w/2) because the spectrum is centered.
    for (size_t u = 0; u < h; ++u) {
      for (size_t v = 0; v < w; ++v) {
        const double fu = double(u) - double(h / 2);
        const double fv = double(v) - double(w / 2);
        std::complex<double> acc = 0.0;
        for (size_t y = 0; y < h; ++y)
          for (size_t xx = 0; xx < w; ++xx) {
            const double ang = -2.0 * std::numbers::pi *
                               (fu * double(y) / double(h) +
                                fv * double(xx) / double(w));
            acc += x.at({y, xx}) * std::complex<double>(std::cos(ang),
                                                        std::sin(ang));
          }
        worst = std::max(worst, std::abs(acc - s.at(u, v)));
      }
    }
    Tensor back = ifft2(s);
    for (size_t i = 0; i < x.size(); ++i)
      worst_rt = std::max(worst_rt, std::abs(back[i] - x[i]));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  report(1, worst < 1e-9 && worst_rt < 1e-9 && secs < 1.0,
         "2-D transform matches direct evaluation and inverts",
         fmt("dft err %.2e, round trip %.2e, %.2fs", worst, worst_rt, secs));
}

// ---- 2: frequency-mask structure and symmetry safety ------------------------

void check_masks() {
  Rng rng(1002);
  bool disjoint = true, zeroed = true, symmetric_safe = true;
  for (int it = 0; it < 100; ++it) {
    const size_t h = 8 + rng.uniform_int(57);   // 8..64
    const size_t w = 8 + rng.uniform_int(121);  // 8..128
    FreqMaskParams p;                           // alpha 20 < beta 25
    auto [mv, mh] = build_masks(p, h, w);
    const double theta = effective_theta(p, h, w);
    const double cu = double(h / 2), cv = double(w / 2);
    for (size_t u = 0; u < h && (disjoint || zeroed); ++u)
      for (size_t v = 0; v < w; ++v) {
        const double a = mv.at({u, v}), b = mh.at({u, v});
        if (a != 0.0 && b != 0.0) disjoint = false;
        const double r = std::hypot(double(u) - cu, double(v) - cv);
        if (r <= theta && (a != 0.0 || b != 0.0)) zeroed = false;
      }
    Tensor img({3, h, w});
    for (size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform();
    try {
      Tensor out = enhance(img, p);
      if (out.dim(0) != 5) symmetric_safe = false;
    } catch (const SymmetryViolationError&) {
      symmetric_safe = false;
    }
  }
  report(2, disjoint && zeroed && symmetric_safe,
         "directional masks are disjoint, hollow inside the cutoff, and "
         "symmetry-preserving",
         fmt("100 random sizes, disjoint=%d zeroed=%d no-violation=%d",
             int(disjoint), int(zeroed), int(symmetric_safe)));
}

// ---- 3: every analytic backward against central differences ----------------

void check_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = run_gradient_suite(42);
  double worst = 0.0;
  std::string worst_op = "-";
  for (const auto& e : entries)
    if (e.max_rel_err > worst) {
      worst = e.max_rel_err;
      worst_op = e.op;
    }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  report(3, worst < 1e-4 && secs < 120.0,
         "all analytic gradients match finite differences",
         fmt("%zu ops, worst %.2e (%s), %.1fs", entries.size(), worst,
             worst_op.c_str(), secs));
}

// ---- 4: position-embedding shift identity ----------------------------------

void check_pe_identity() {
  Rng rng(1004);
  const size_t d = 64;
  bool exact = true;
  for (int it = 0; it < 1000 && exact; ++it) {
    const long p = long(rng.uniform_int(4096));
    const long r = long(rng.uniform_int(4096));
    Tensor a = recurrent_pe(p, r, d);
    Tensor b = recurrent_pe(p + r, 0, d);
    for (size_t i = 0; i < d; ++i)
      if (a[i] != b[i]) exact = false;
  }
  // Scale-pinned form: scale k's embedding of local position p equals the
  // flat embedding evaluated at p plus the width of all preceding scales.
  const std::vector<size_t> widths{8, 4, 2, 1};
  bool prefix_ok = true;
  for (size_t k = 1; k <= widths.size() && prefix_ok; ++k) {
    long prefix = 0;
    for (size_t j = 0; j + 1 < k; ++j) prefix += long(widths[j]);
    for (long p = 0; p < long(widths[k - 1]); ++p) {
      Tensor a = recurrent_pe_scale(p, 7, k, widths, d);
      Tensor b = recurrent_pe(p + prefix, 7, d);
      for (size_t i = 0; i < d; ++i)
        if (a[i] != b[i]) prefix_ok = false;
    }
  }
  report(4, exact && prefix_ok,
         "position embedding offset identity holds bit for bit",
         fmt("1000 random (p,r) exact=%d, prefix offsets exact=%d", int(exact),
             int(prefix_ok)));
}

// ---- 5: label round trip at full working resolution -------------------------

void check_geometry_roundtrip() {
  Rng rng(1005);
  double worst_vertex = 0.0, worst_ceil = 0.0, worst_iou2 = 1.0,
         worst_iou3 = 1.0;
  for (RoomKind kind : {RoomKind::Box, RoomKind::LShape}) {
    Sample s = synth_room(rng, kind, 1024, 512);
    const std::vector<size_t> cols = corner_columns(s.annotation, 1024);
    FloorPlan rec = boundaries_to_floorplan(s.boundaries, cols);
    // Scale = largest coordinate magnitude of the true footprint.
    double scale = 0.0;
    for (const auto& v : s.plan.vertices)
      scale = std::max({scale, std::abs(v.first), std::abs(v.second)});
    for (const auto& v : rec.vertices) {
      double best = 1e30;
      for (const auto& g : s.plan.vertices)
        best = std::min(best, std::hypot(v.first - g.first,
                                         v.second - g.second));
      worst_vertex = std::max(worst_vertex, best / scale);
    }
    worst_ceil = std::max(
        worst_ceil, std::abs(rec.ceil_y - s.plan.ceil_y) / s.plan.ceil_y);
    worst_iou2 = std::min(worst_iou2, iou2d(rec, s.plan));
    worst_iou3 = std::min(worst_iou3, iou3d(rec, s.plan));
  }
  report(5,
         worst_vertex < 0.02 && worst_ceil < 0.02 && worst_iou2 >= 0.98 &&
             worst_iou3 >= 0.98,
         "box and L rooms survive the corner->boundary->plan round trip",
         fmt("vertex err %.3f%%, ceil err %.3f%%, iou2d %.4f, iou3d %.4f",
             100 * worst_vertex, 100 * worst_ceil, worst_iou2, worst_iou3));
}

// ---- 6: polygon overlap against an independent rasterizer ------------------

// Even-odd area of pixel centers inside poly (and inside both), computed by
// scanline crossings on a grid^2 raster spanning the union bounding box.
struct RasterCounts {
  long a = 0, b = 0, both = 0;
};

std::vector<std::pair<double, double>> row_spans(
    const std::vector<std::pair<double, double>>& poly, double y) {
  std::vector<double> xs;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    if ((p.second <= y) == (q.second <= y)) continue;
    xs.push_back(p.first +
                 (y - p.second) * (q.first - p.first) / (q.second - p.second));
  }
  std::sort(xs.begin(), xs.end());
  std::vector<std::pair<double, double>> spans;
  for (size_t i = 0; i + 1 < xs.size(); i += 2) spans.emplace_back(xs[i], xs[i + 1]);
  return spans;
}

long cols_inside(const std::vector<std::pair<double, double>>& spans,
                 double x0, double step, long nx) {
  long total = 0;
  for (auto [lo, hi] : spans) {
    // pixel centers x0 + (i+0.5)*step inside [lo, hi]
    const double a = (lo - x0) / step - 0.5;
    const double b = (hi - x0) / step - 0.5;
    const long ia = std::max<long>(0, long(std::ceil(a)));
    const long ib = std::min<long>(nx - 1, long(std::floor(b)));
    total += std::max<long>(0, ib - ia + 1);
  }
  return total;
}

double raster_iou(const std::vector<std::pair<double, double>>& pa,
                  const std::vector<std::pair<double, double>>& pb,
                  long grid) {
  double x0 = 1e30, x1 = -1e30, y0 = 1e30, y1 = -1e30;
  for (const auto* poly : {&pa, &pb})
    for (const auto& v : *poly) {
      x0 = std::min(x0, v.first);
      x1 = std::max(x1, v.first);
      y0 = std::min(y0, v.second);
      y1 = std::max(y1, v.second);
    }
  const double sx = (x1 - x0) / double(grid), sy = (y1 - y0) / double(grid);
  RasterCounts c;
  for (long r = 0; r < grid; ++r) {
    const double y = y0 + (double(r) + 0.5) * sy;
    const auto sa = row_spans(pa, y);
    const auto sb = row_spans(pb, y);
    c.a += cols_inside(sa, x0, sx, grid);
    c.b += cols_inside(sb, x0, sx, grid);
    // intersection of the two span lists
    for (auto [la, ha] : sa)
      for (auto [lb, hb] : sb) {
        const double lo = std::max(la, lb), hi = std::min(ha, hb);
        if (lo < hi) c.both += cols_inside({{lo, hi}}, x0, sx, grid);
      }
  }
  const double uni = double(c.a + c.b - c.both);
  return uni <= 0 ? 0.0 : double(c.both) / uni;
}

std::vector<std::pair<double, double>> random_convex(Rng& rng) {
  // Random support points on a jittered circle, CCW by construction.
  const size_t n = 3 + rng.uniform_int(6);
  const double cx = rng.uniform(-1.0, 1.0), cy = rng.uniform(-1.0, 1.0);
  std::vector<double> angles(n);
  for (double& a : angles) a = rng.uniform(0.0, 2 * std::numbers::pi);
  std::sort(angles.begin(), angles.end());
  std::vector<std::pair<double, double>> poly;
  const double rad = rng.uniform(0.5, 3.0);
  for (double a : angles)
    poly.emplace_back(cx + rad * std::cos(a), cy + rad * std::sin(a));
  return poly;
}

void check_iou_oracle() {
  Rng rng(1006);
  double worst = 0.0;
  for (int it = 0; it < 50; ++it) {
    FloorPlan a, b;
    a.vertices = random_convex(rng);
    b.vertices = random_convex(rng);
    a.ceil_y = b.ceil_y = 1.0;
    const double got = iou2d(a, b);
    const double ref = raster_iou(a.vertices, b.vertices, 4096);
    worst = std::max(worst, std::abs(got - ref));
  }
  report(6, worst < 0.01,
         "polygon overlap matches a 4096^2 scanline rasterization",
         fmt("50 convex pairs, worst |iou - ref| = %.4f", worst));
}

// ---- 7: end-to-end horizontal roll equivariance -----------------------------

void check_roll_equivariance() {
  // Absolute position embeddings break translation symmetry by design, so
  // this property is checked with position embeddings off; the rest of the
  // stack (stem, pyramid, attention, head) is circular end to end.
  RunConfig rc;
  rc.pe = "none";
  const ModelConfig mc = rc.to_model_config();
  Rng rng(1007);
  ParamStore store;
  PanoModel model(store, mc, rng);

  Rng img_rng(1008);
  Sample s = synth_room(img_rng, RoomKind::LShape, rc.width, rc.height);
  const size_t delta = rc.width / 4;
  LayoutBoundaries base = model.predict(s.image);
  LayoutBoundaries rolled = model.predict(roll_image(s.image, delta));

  double worst = 0.0;
  for (size_t j = 0; j < rc.width; ++j) {
    const size_t js = (j + delta) % rc.width;
    worst = std::max({worst, std::abs(rolled.y_w[js] - base.y_w[j]),
                      std::abs(rolled.y_c[js] - base.y_c[j]),
                      std::abs(rolled.y_f[js] - base.y_f[j])});
  }
  report(7, worst < 1e-6,
         "rolling the panorama by W/4 rolls the prediction by W/4",
         fmt("max abs deviation %.2e (position embeddings off)", worst));
}

// ---- 8: near-horizon amplification of the 3-D boundary loss -----------------

double floor_term_at(double gamma_deg, double err_deg, size_t w) {
  LayoutBoundaries pred(w), gt(w);
  const double g = gamma_deg * std::numbers::pi / 180.0;
  const double e = err_deg * std::numbers::pi / 180.0;
  for (size_t j = 0; j < w; ++j) {
    gt.y_c[j] = pred.y_c[j] = 0.6;  // identical ceilings: term cancels
    gt.y_f[j] = g;
    pred.y_f[j] = g + e;
    gt.y_w[j] = pred.y_w[j] = 0.0;
  }
  return loss_boundary_3d(pred, gt, 1.4);
}

void check_loss_imbalance() {
  const double at45 = floor_term_at(-45.0, 1.0, 64);
  const double at80 = floor_term_at(-80.0, 1.0, 64);
  bool monotone = true;
  double prev = 1e30;
  for (double gdeg = -45; gdeg >= -80; gdeg -= 1.0) {
    const double t = floor_term_at(gdeg, 1.0, 64);
    if (t >= prev) monotone = false;
    prev = t;
  }
  report(8, at45 > at80 && monotone,
         "a 1 degree floor error costs more near the horizon",
         fmt("term(-45)=%.5f > term(-80)=%.5f, strictly decreasing over the "
             "grid=%d",
             at45, at80, int(monotone)));
}

// ---- 9: the toy task is actually learnable in the time box ------------------

struct RunOutcome {
  int exit_code = -1;
  double train2d = -1, held2d = -1;
  double secs = 0;
};

RunOutcome run_training(const std::string& extra, const fs::path& out) {
  const std::string cmd = std::string(PANOKIT_CLI_PATH) +
                          " train-toy --preset overfit64 " + extra +
                          " --set out_dir=" + out.string() + " > " +
                          (out.string() + ".log") + " 2>&1";
  const auto t0 = std::chrono::steady_clock::now();
  const int status = std::system(cmd.c_str());
  RunOutcome r;
  r.secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream metrics(out / "metrics.tsv");
  std::string line, last;
  while (std::getline(metrics, line))
    if (line.rfind("final\t", 0) == 0 && line.find("iou") == std::string::npos)
      last = line;
  if (!last.empty()) {
    std::istringstream ss(last);
    std::string tag;
    double t2, t3, h2, h3;
    if (ss >> tag >> t2 >> t3 >> h2 >> h3) {
      r.train2d = t2;
      r.held2d = h2;
    }
  }
  return r;
}

void check_training() {
  const fs::path root = fs::temp_directory_path() / "panokit_acceptance";
  fs::create_directories(root);

  RunOutcome main_run = run_training("", root / "main");
  const bool main_ok = main_run.exit_code == 0 && main_run.train2d >= 0.85 &&
                       main_run.held2d >= 0.70 && main_run.secs < 1800.0;
  report(9, main_ok,
         "the 64-room toy task overfits within the time box",
         fmt("train iou2d %.3f (>=0.85), held iou2d %.3f (>=0.70), %.0fs "
             "(<1800s), exit %d",
             main_run.train2d, main_run.held2d, main_run.secs,
             main_run.exit_code));

  // Ablation switches must run end to end under the same preset. Epochs are
  // cut to keep the gate fast; only completion is asserted here.
  const char* toggles[] = {"--set pe=learned", "--set edge_enhance=false",
                           "--set loss_3d=false"};
  const char* names[] = {"learned position embedding", "edge channels off",
                         "image-space boundary loss"};
  for (int i = 0; i < 3; ++i) {
    RunOutcome ab = run_training(std::string(toggles[i]) + " --set epochs=2",
                                 root / ("ablation" + std::to_string(i)));
    report(9, ab.exit_code == 0,
           std::string("ablation completes: ") + names[i],
           fmt("exit %d, %.0fs", ab.exit_code, ab.secs));
  }
}

}  // namespace

int main() {
  now_seconds();
  check_fft();
  check_masks();
  check_gradients();
  check_pe_identity();
  check_geometry_roundtrip();
  check_iou_oracle();
  check_roll_equivariance();
  check_loss_imbalance();
  check_training();
  std::printf("%s (%d failure%s, %.0fs total)\n",
              g_failures == 0 ? "ALL CRITERIA PASS" : "CRITERIA FAILED",
              g_failures, g_failures == 1 ? "" : "s", now_seconds());
  return g_failures == 0 ? 0 : 1;
}
