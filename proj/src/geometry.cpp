#include "panokit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "panokit/error.hpp"

namespace panokit {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Wraps x into [-period/2, period/2). Exact for inputs already within one
// period of that range, which keeps column rendering bit-identical under
// integer rolls of the annotation.
double wrap_half(double x, double period) {
  double y = std::fmod(x, period);
  if (y < -0.5 * period) y += period;
  if (y >= 0.5 * period) y -= period;
  return y;
}

size_t nearest_column(double u, size_t width) {
  long col = std::lround(u - 0.5);
  long w = static_cast<long>(width);
  col %= w;
  if (col < 0) col += w;
  return static_cast<size_t>(col);
}

double median(std::vector<double>& v) {
  size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  double hi = *mid;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

SpherePoint pixel_to_sphere(double u, double v, size_t width, size_t height) {
  SpherePoint p;
  p.delta = (u / static_cast<double>(width) - 0.5) * kTwoPi;
  p.gamma = (0.5 - v / static_cast<double>(height)) * kPi;
  return p;
}

std::pair<double, double> sphere_to_pixel(const SpherePoint& p, size_t width,
                                          size_t height) {
  double u = (p.delta / kTwoPi + 0.5) * static_cast<double>(width);
  double v = (0.5 - p.gamma / kPi) * static_cast<double>(height);
  return {u, v};
}

Point3 sphere_to_3d(const SpherePoint& p, double s) {
  double cg = std::cos(p.gamma);
  return {s * cg * std::sin(p.delta), s * std::sin(p.gamma),
          s * std::cos(p.delta) * cg};
}

Point3 project_to_plane(const SpherePoint& p, double plane_y,
                        double gamma_min) {
  if (std::abs(p.gamma) <= gamma_min || (p.gamma > 0.0) != (plane_y > 0.0)) {
    throw HorizonDegenerateError(
        "project_to_plane: latitude " + std::to_string(p.gamma) +
        " cannot reach plane y=" + std::to_string(plane_y));
  }
  Point3 q = sphere_to_3d(p, plane_y / std::sin(p.gamma));
  q.y = plane_y;  // kill the last-ulp rounding of s*sin(gamma)
  return q;
}

LayoutBoundaries corners_to_boundaries(const CornerAnnotation& ann,
                                       size_t width, size_t height) {
  const size_t n = ann.pairs.size();
  if (n < 4) {
    throw InvalidAnnotationError("annotation has " + std::to_string(n) +
                                 " corners; a closed room needs at least 4");
  }
  std::vector<CornerPair> pairs = ann.pairs;
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const CornerPair& a, const CornerPair& b) { return a.u < b.u; });

  // Polar wall vertices: floor-plane distance r per corner, plus the
  // per-corner ceiling height ratio.
  std::vector<double> radius(n), heights(n);
  for (size_t i = 0; i < n; ++i) {
    SpherePoint ce = pixel_to_sphere(pairs[i].u, pairs[i].v_ceil, width, height);
    SpherePoint fl = pixel_to_sphere(pairs[i].u, pairs[i].v_floor, width, height);
    if (fl.gamma >= -kGammaMin || ce.gamma <= kGammaMin) {
      throw InvalidAnnotationError(
          "corner " + std::to_string(i) +
          ": floor must lie below the horizon and ceiling above it");
    }
    radius[i] = 1.0 / std::tan(-fl.gamma);
    heights[i] = std::tan(ce.gamma) / std::tan(-fl.gamma);
  }
  // Value-sorted before summing so the mean ignores the (roll-dependent)
  // corner order.
  std::vector<double> sorted_h = heights;
  std::sort(sorted_h.begin(), sorted_h.end());
  double h = 0.0;
  for (double x : sorted_h) h += x;
  h /= static_cast<double>(n);

  LayoutBoundaries b(width);
  const double col_to_rad = kTwoPi / static_cast<double>(width);
  const double dw = static_cast<double>(width);
  for (size_t j = 0; j < width; ++j) {
    // Rotate the frame so this column's ray is the +z axis; the wall hit is
    // the nearest segment crossing of x=0 with z > 0.
    const double uc = static_cast<double>(j) + 0.5;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
      const CornerPair& A = pairs[i];
      const CornerPair& B = pairs[(i + 1) % n];
      double pa = wrap_half(A.u - uc, dw) * col_to_rad;
      double pb = wrap_half(B.u - uc, dw) * col_to_rad;
      double xa = radius[i] * std::sin(pa);
      double za = radius[i] * std::cos(pa);
      double xb = radius[(i + 1) % n] * std::sin(pb);
      double zb = radius[(i + 1) % n] * std::cos(pb);
      bool crosses = (xa <= 0.0 && xb > 0.0) || (xb <= 0.0 && xa > 0.0);
      if (!crosses) continue;
      double t = xa / (xa - xb);
      double z_hit = za + t * (zb - za);
      if (z_hit > 0.0 && z_hit < best) best = z_hit;
    }
    if (!std::isfinite(best)) {
      throw InvalidAnnotationError(
          "column " + std::to_string(j) +
          ": camera ray misses the wall polygon (camera outside the room?)");
    }
    b.y_f[j] = -std::atan2(1.0, best);
    b.y_c[j] = std::atan2(h, best);
    b.y_w[j] = 0.0;
  }
  for (size_t i = 0; i < n; ++i) b.y_w[nearest_column(pairs[i].u, width)] = 1.0;
  return b;
}

std::vector<size_t> peak_find(const Tensor& y_w, size_t min_sep,
                              double thresh) {
  if (y_w.ndim() != 1) throw DimensionError("peak_find: y_w must be 1-D");
  if (min_sep < 1) throw ConfigError("peak_find: min_sep must be >= 1");
  const size_t w = y_w.size();
  std::vector<size_t> cand;
  for (size_t j = 0; j < w; ++j) {
    double v = y_w[j];
    if (v > thresh && v >= y_w[(j + w - 1) % w] && v >= y_w[(j + 1) % w]) {
      cand.push_back(j);
    }
  }
  std::sort(cand.begin(), cand.end(), [&](size_t a, size_t b) {
    if (y_w[a] != y_w[b]) return y_w[a] > y_w[b];
    return a < b;
  });
  std::vector<size_t> kept;
  for (size_t j : cand) {
    bool ok = true;
    for (size_t k : kept) {
      size_t d = j > k ? j - k : k - j;
      d = std::min(d, w - d);
      if (d < min_sep) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(j);
  }
  if (kept.size() < 3) {
    throw DegenerateLayoutError("peak_find: only " +
                                std::to_string(kept.size()) +
                                " corner peaks; a room needs at least 3");
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<size_t> peak_find(const Tensor& y_w) {
  return peak_find(y_w, std::max<size_t>(1, y_w.size() / 64), 0.5);
}

FloorPlan boundaries_to_floorplan(const LayoutBoundaries& b,
                                  const std::vector<size_t>& peaks) {
  if (peaks.size() < 3) {
    throw DegenerateLayoutError("boundaries_to_floorplan: need >= 3 peaks, got " +
                                std::to_string(peaks.size()));
  }
  const size_t w = b.width();
  FloorPlan plan;
  plan.floor_y = -1.0;
  for (size_t j : peaks) {
    double delta = ((static_cast<double>(j) + 0.5) / static_cast<double>(w) - 0.5) * kTwoPi;
    Point3 p = project_to_plane({delta, b.y_f[j]}, -1.0);
    plan.vertices.push_back({p.x, p.z});
  }
  std::vector<double> est;
  est.reserve(w);
  for (size_t j = 0; j < w; ++j) {
    if (b.y_f[j] >= -kGammaMin || b.y_c[j] <= kGammaMin) continue;
    double d = 1.0 / std::tan(-b.y_f[j]);
    est.push_back(std::tan(b.y_c[j]) * d);
  }
  if (est.empty()) {
    throw HorizonDegenerateError(
        "boundaries_to_floorplan: no column has usable latitudes");
  }
  plan.ceil_y = median(est);
  if (polygon_area(plan.vertices) < 0.0) {
    std::reverse(plan.vertices.begin(), plan.vertices.end());
  }
  return plan;
}

double polygon_area(const std::vector<std::array<double, 2>>& vertices) {
  const size_t n = vertices.size();
  if (n < 3) {
    throw DimensionError("polygon_area: need >= 3 vertices, got " +
                         std::to_string(n));
  }
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const auto& p = vertices[i];
    const auto& q = vertices[(i + 1) % n];
    acc += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * acc;
}

namespace {

// Sorted x-coordinates where a horizontal line at height z crosses polygon
// edges; the half-open vertex rule keeps the count even.
void scan_crossings(const std::vector<std::array<double, 2>>& poly, double z,
                    std::vector<double>& xs) {
  xs.clear();
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    if ((p[1] > z) == (q[1] > z)) continue;
    xs.push_back(p[0] + (z - p[1]) * (q[0] - p[0]) / (q[1] - p[1]));
  }
  std::sort(xs.begin(), xs.end());
}

// Converts crossing pairs into half-open integer column ranges of pixel
// centers inside the polygon.
void spans_to_cols(const std::vector<double>& xs, double x0, double inv_dx,
                   long grid, std::vector<std::pair<long, long>>& out) {
  out.clear();
  for (size_t k = 0; k + 1 < xs.size(); k += 2) {
    long lo = static_cast<long>(std::ceil((xs[k] - x0) * inv_dx - 0.5));
    long hi = static_cast<long>(std::ceil((xs[k + 1] - x0) * inv_dx - 0.5));
    lo = std::max(lo, 0L);
    hi = std::min(hi, grid);
    if (lo < hi) out.emplace_back(lo, hi);
  }
}

struct RasterAreas {
  double a = 0.0, b = 0.0, inter = 0.0;
};

RasterAreas raster_areas(const FloorPlan& a, const FloorPlan& b, size_t grid) {
  if (a.vertices.size() < 3 || b.vertices.size() < 3) {
    throw DimensionError("iou: floor plans need >= 3 vertices");
  }
  double xmin = a.vertices[0][0], xmax = xmin;
  double zmin = a.vertices[0][1], zmax = zmin;
  for (const auto* poly : {&a.vertices, &b.vertices}) {
    for (const auto& v : *poly) {
      xmin = std::min(xmin, v[0]);
      xmax = std::max(xmax, v[0]);
      zmin = std::min(zmin, v[1]);
      zmax = std::max(zmax, v[1]);
    }
  }
  if (!(xmax > xmin) || !(zmax > zmin)) {
    throw UndefinedMetricError("iou: joint bounding box is degenerate");
  }
  const long g = static_cast<long>(grid);
  const double dx = (xmax - xmin) / static_cast<double>(grid);
  const double dz = (zmax - zmin) / static_cast<double>(grid);
  const double inv_dx = 1.0 / dx;

  long cnt_a = 0, cnt_b = 0, cnt_i = 0;
  std::vector<double> xs;
  std::vector<std::pair<long, long>> sa, sb;
  for (long r = 0; r < g; ++r) {
    double z = zmin + (static_cast<double>(r) + 0.5) * dz;
    scan_crossings(a.vertices, z, xs);
    spans_to_cols(xs, xmin, inv_dx, g, sa);
    scan_crossings(b.vertices, z, xs);
    spans_to_cols(xs, xmin, inv_dx, g, sb);
    for (const auto& s : sa) cnt_a += s.second - s.first;
    for (const auto& s : sb) cnt_b += s.second - s.first;
    size_t ia = 0, ib = 0;
    while (ia < sa.size() && ib < sb.size()) {
      long lo = std::max(sa[ia].first, sb[ib].first);
      long hi = std::min(sa[ia].second, sb[ib].second);
      if (lo < hi) cnt_i += hi - lo;
      if (sa[ia].second < sb[ib].second) {
        ++ia;
      } else {
        ++ib;
      }
    }
  }
  const double cell = dx * dz;
  return {static_cast<double>(cnt_a) * cell, static_cast<double>(cnt_b) * cell,
          static_cast<double>(cnt_i) * cell};
}

}  // namespace

double iou2d(const FloorPlan& a, const FloorPlan& b, size_t grid) {
  RasterAreas r = raster_areas(a, b, grid);
  double uni = r.a + r.b - r.inter;
  if (uni <= 0.0) throw UndefinedMetricError("iou2d: empty union");
  return r.inter / uni;
}

double iou3d(const FloorPlan& a, const FloorPlan& b, size_t grid) {
  if (a.ceil_y <= a.floor_y || b.ceil_y <= b.floor_y) {
    throw UndefinedMetricError("iou3d: ceiling must lie above the floor");
  }
  RasterAreas r = raster_areas(a, b, grid);
  double va = r.a * (a.ceil_y - a.floor_y);
  double vb = r.b * (b.ceil_y - b.floor_y);
  double h_inter =
      std::min(a.ceil_y, b.ceil_y) - std::max(a.floor_y, b.floor_y);
  double vi = h_inter > 0.0 ? r.inter * h_inter : 0.0;
  double uni = va + vb - vi;
  if (uni <= 0.0) throw UndefinedMetricError("iou3d: empty union");
  return vi / uni;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

// Reads "key <numbers...>" and throws IoError naming the expected key.
void expect_key(std::istream& in, const std::string& path,
                const std::string& key) {
  std::string got;
  if (!(in >> got) || got != key) {
    throw IoError(path + ": expected '" + key + "' entry");
  }
}

double read_num(std::istream& in, const std::string& path,
                const std::string& what) {
  double v;
  if (!(in >> v)) throw IoError(path + ": malformed " + what);
  return v;
}

}  // namespace

CornerAnnotation read_corner_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::array<double, 2>> pts;
  double u, v;
  while (in >> u >> v) pts.push_back({u, v});
  if (!in.eof()) {
    throw InvalidAnnotationError(path + ": non-numeric token at point " +
                                 std::to_string(pts.size()));
  }
  if (pts.size() < 8 || pts.size() % 2 != 0) {
    throw InvalidAnnotationError(
        path + ": need an even number of points >= 8, got " +
        std::to_string(pts.size()));
  }
  CornerAnnotation ann;
  for (size_t i = 0; i < pts.size(); i += 2) {
    const auto& ceil = pts[i];
    const auto& floor = pts[i + 1];
    if (std::abs(ceil[0] - floor[0]) > 0.5) {
      throw InvalidAnnotationError(path + ": corner " + std::to_string(i / 2) +
                                   " ceiling/floor columns disagree");
    }
    if (!(ceil[1] < floor[1])) {
      throw InvalidAnnotationError(path + ": corner " + std::to_string(i / 2) +
                                   " ceiling is not above floor");
    }
    ann.pairs.push_back({0.5 * (ceil[0] + floor[0]), ceil[1], floor[1]});
  }
  for (size_t i = 1; i < ann.pairs.size(); ++i) {
    if (!(ann.pairs[i].u > ann.pairs[i - 1].u)) {
      throw InvalidAnnotationError(path + ": corners not ordered left-to-right at index " +
                                   std::to_string(i));
    }
  }
  return ann;
}

void write_corner_file(const CornerAnnotation& ann, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const auto& p : ann.pairs) {
    out << fmt_double(p.u) << ' ' << fmt_double(p.v_ceil) << '\n'
        << fmt_double(p.u) << ' ' << fmt_double(p.v_floor) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

FloorPlan read_floorplan_doc(const std::string& path) {
  std::ifstream in = open_in(path);
  FloorPlan plan;
  expect_key(in, path, "floor_y");
  plan.floor_y = read_num(in, path, "floor_y");
  expect_key(in, path, "ceil_y");
  plan.ceil_y = read_num(in, path, "ceil_y");
  expect_key(in, path, "vertices");
  double nv = read_num(in, path, "vertex count");
  if (nv < 3 || nv != std::floor(nv)) {
    throw IoError(path + ": vertex count must be an integer >= 3");
  }
  for (size_t i = 0; i < static_cast<size_t>(nv); ++i) {
    double x = read_num(in, path, "vertex x");
    double z = read_num(in, path, "vertex z");
    plan.vertices.push_back({x, z});
  }
  if (!(plan.ceil_y > plan.floor_y)) {
    throw IoError(path + ": ceil_y must exceed floor_y");
  }
  return plan;
}

void write_floorplan_doc(const FloorPlan& plan, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "floor_y " << fmt_double(plan.floor_y) << '\n'
      << "ceil_y " << fmt_double(plan.ceil_y) << '\n'
      << "vertices " << plan.vertices.size() << '\n';
  for (const auto& v : plan.vertices) {
    out << fmt_double(v[0]) << ' ' << fmt_double(v[1]) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

LayoutBoundaries read_boundaries_doc(const std::string& path,
                                     std::vector<size_t>* corner_cols) {
  std::ifstream in = open_in(path);
  expect_key(in, path, "width");
  double wv = read_num(in, path, "width");
  if (wv < 1 || wv != std::floor(wv)) {
    throw IoError(path + ": width must be a positive integer");
  }
  size_t w = static_cast<size_t>(wv);
  LayoutBoundaries b(w);
  for (auto [key, row] : {std::pair{"y_c", &b.y_c}, {"y_f", &b.y_f}, {"y_w", &b.y_w}}) {
    expect_key(in, path, key);
    for (size_t j = 0; j < w; ++j) (*row)[j] = read_num(in, path, key);
  }
  expect_key(in, path, "corners");
  double nc = read_num(in, path, "corner count");
  if (nc < 0 || nc != std::floor(nc)) {
    throw IoError(path + ": corner count must be a non-negative integer");
  }
  std::vector<size_t> cols;
  for (size_t i = 0; i < static_cast<size_t>(nc); ++i) {
    double c = read_num(in, path, "corner column");
    if (c < 0 || c >= wv || c != std::floor(c)) {
      throw IoError(path + ": corner column out of range");
    }
    cols.push_back(static_cast<size_t>(c));
  }
  if (corner_cols) *corner_cols = std::move(cols);
  return b;
}

void write_boundaries_doc(const LayoutBoundaries& b,
                          const std::vector<size_t>& corner_cols,
                          const std::string& path) {
  std::ofstream out = open_out(path);
  const size_t w = b.width();
  out << "width " << w << '\n';
  for (auto [key, row] : {std::pair{"y_c", &b.y_c}, {"y_f", &b.y_f}, {"y_w", &b.y_w}}) {
    out << key;
    for (size_t j = 0; j < w; ++j) out << ' ' << fmt_double((*row)[j]);
    out << '\n';
  }
  out << "corners " << corner_cols.size();
  for (size_t c : corner_cols) out << ' ' << c;
  out << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace panokit
