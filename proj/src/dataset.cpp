#include "panokit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "panokit/error.hpp"
#include "panokit/image_io.hpp"

namespace panokit {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;

struct Vec2 {
  double x = 0.0;
  double z = 0.0;
};

using Polygon = std::vector<Vec2>;

double cross2(const Vec2& a, const Vec2& b) { return a.x * b.z - a.z * b.x; }

// Signed distance of p from the supporting line of edge a->b; positive on
// the interior (left) side when the polygon is counterclockwise.
double edge_signed_dist(const Vec2& a, const Vec2& b, const Vec2& p) {
  const Vec2 d{b.x - a.x, b.z - a.z};
  const Vec2 w{p.x - a.x, p.z - a.z};
  return cross2(d, w) / std::hypot(d.x, d.z);
}

// Nearest wall crossing of the camera ray with longitude delta, as seen from
// the origin. Returns the distance and wall index (edge i spans vertex i to
// i+1); infinite distance when nothing is hit.
std::pair<double, size_t> cast_ray(const Polygon& poly, double delta) {
  const double cd = std::cos(delta), sd = std::sin(delta);
  double best = std::numeric_limits<double>::infinity();
  size_t wall = 0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    // Rotate so the ray becomes the +z axis.
    const double xa = a.x * cd - a.z * sd, za = a.x * sd + a.z * cd;
    const double xb = b.x * cd - b.z * sd, zb = b.x * sd + b.z * cd;
    const bool crosses = (xa <= 0.0 && xb > 0.0) || (xb <= 0.0 && xa > 0.0);
    if (!crosses) continue;
    const double t = xa / (xa - xb);
    const double z_hit = za + t * (zb - za);
    if (z_hit > 0.0 && z_hit < best) {
      best = z_hit;
      wall = i;
    }
  }
  return {best, wall};
}

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (int(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

size_t nearest_col(double u, size_t width) {
  long col = std::lround(u - 0.5);
  const long w = long(width);
  col %= w;
  if (col < 0) col += w;
  return size_t(col);
}

// Circular gap between two column coordinates, in columns.
double circ_gap(double a, double b, double w) {
  double d = std::abs(a - b);
  return std::min(d, w - d);
}

CornerAnnotation annotate(const Polygon& poly, double ceil_h, size_t width,
                          size_t height) {
  CornerAnnotation ann;
  for (const Vec2& v : poly) {
    const double delta = std::atan2(v.x, v.z);
    const double d = std::hypot(v.x, v.z);
    CornerPair p;
    p.u = sphere_to_pixel({delta, 0.0}, width, height).first;
    p.v_ceil = sphere_to_pixel({delta, std::atan2(ceil_h, d)}, width, height)
                   .second;
    p.v_floor = sphere_to_pixel({delta, -std::atan2(1.0, d)}, width, height)
                    .second;
    ann.pairs.push_back(p);
  }
  std::sort(ann.pairs.begin(), ann.pairs.end(),
            [](const CornerPair& a, const CornerPair& b) { return a.u < b.u; });
  return ann;
}

// Flat-shaded rendering consistent with the sample's boundary labels: one
// hue per wall, anti-aliased dark lines on the wall-floor/wall-ceiling
// boundaries and on the corner columns.
Tensor render(const Polygon& poly, const CornerAnnotation& ann,
              const LayoutBoundaries& b, size_t width, size_t height) {
  const Rgb ceiling{0.82, 0.82, 0.86};
  const Rgb floor{0.34, 0.30, 0.27};
  const Rgb line{0.07, 0.07, 0.09};
  std::vector<Rgb> wall_color(poly.size());
  for (size_t i = 0; i < poly.size(); ++i)
    wall_color[i] = hsv(0.13 + 0.618033988749895 * double(i), 0.5, 0.75);

  Tensor img({3, height, width});
  const double hh = double(height);
  for (size_t j = 0; j < width; ++j) {
    const double uc = double(j) + 0.5;
    const SpherePoint dir = pixel_to_sphere(uc, hh / 2.0, width, height);
    const auto [dist, wall] = cast_ray(poly, dir.delta);
    (void)dist;
    const Rgb wc = wall_color[wall];
    // Boundary rows for this column, in continuous pixel coordinates.
    const double v_c = (0.5 - b.y_c[j] / M_PI) * hh;
    const double v_f = (0.5 - b.y_f[j] / M_PI) * hh;
    // Corner-column line coverage (walls only).
    double corner_cov = 0.0;
    for (const CornerPair& p : ann.pairs) {
      const double g = circ_gap(uc, p.u, double(width));
      corner_cov = std::max(corner_cov, 1.0 - g);
    }
    corner_cov = std::clamp(corner_cov, 0.0, 1.0) * 0.85;
    for (size_t y = 0; y < height; ++y) {
      const double vc = double(y) + 0.5;
      Rgb px = vc < v_c ? ceiling : (vc > v_f ? floor : wc);
      double cov = std::max(std::max(0.0, 1.0 - std::abs(vc - v_c)),
                            std::max(0.0, 1.0 - std::abs(vc - v_f))) *
                   0.85;
      if (vc >= v_c && vc <= v_f) cov = std::max(cov, corner_cov);
      px.r += (line.r - px.r) * cov;
      px.g += (line.g - px.g) * cov;
      px.b += (line.b - px.b) * cov;
      img.at(0, y, j) = px.r;
      img.at(1, y, j) = px.g;
      img.at(2, y, j) = px.b;
    }
  }
  return img;
}

Polygon draw_polygon(Rng& rng, RoomKind kind) {
  if (kind == RoomKind::Box) {
    const double hx = rng.uniform(0.5, 3.0);
    const double hz = rng.uniform(0.5, 3.0);
    return {{hx, hz}, {-hx, hz}, {-hx, -hz}, {hx, -hz}};
  }
  // L-shape: a box with one quadrant notched out. Extents start at 0.8 and
  // the notch leaves at least 0.4 of wall on each side, so the region seeing
  // every wall keeps room for the camera margin.
  const double hx = rng.uniform(0.8, 3.0);
  const double hz = rng.uniform(0.8, 3.0);
  const double nx = rng.uniform(0.4, 2.0 * hx - 0.8);
  const double nz = rng.uniform(0.4, 2.0 * hz - 0.8);
  const long quadrant = rng.uniform_int(4);
  // Notch at the (+x,+z) corner, counterclockwise.
  Polygon p = {{hx, hz - nz}, {hx - nx, hz - nz}, {hx - nx, hz},
               {-hx, hz},     {-hx, -hz},         {hx, -hz}};
  const bool flip_x = quadrant == 1 || quadrant == 2;
  const bool flip_z = quadrant == 2 || quadrant == 3;
  for (Vec2& v : p) {
    if (flip_x) v.x = -v.x;
    if (flip_z) v.z = -v.z;
  }
  // A single reflection reverses the orientation; restore counterclockwise.
  if (flip_x != flip_z) std::reverse(p.begin(), p.end());
  return p;
}

}  // namespace

std::vector<size_t> corner_columns(const CornerAnnotation& ann, size_t width) {
  std::vector<size_t> cols;
  for (const CornerPair& p : ann.pairs) cols.push_back(nearest_col(p.u, width));
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

Sample synth_room(Rng& rng, RoomKind kind, size_t width, size_t height) {
  char nonce[16];
  std::snprintf(nonce, sizeof nonce, "%012llx",
                (unsigned long long)rng.uniform_int(int64_t(1) << 48));
  const std::string id =
      (kind == RoomKind::Box ? "box-" : "ell-") + std::string(nonce);

  // Corners closer than this in image columns would merge their probability
  // peaks; scale with width so full-resolution renders stay consistent.
  const double min_gap = 2.5 * double(width) / 128.0;

  Polygon poly;
  Vec2 cam;
  for (bool placed = false; !placed;) {
    poly = draw_polygon(rng, kind);
    double lo_x = poly[0].x, hi_x = poly[0].x, lo_z = poly[0].z,
           hi_z = poly[0].z;
    for (const Vec2& v : poly) {
      lo_x = std::min(lo_x, v.x), hi_x = std::max(hi_x, v.x);
      lo_z = std::min(lo_z, v.z), hi_z = std::max(hi_z, v.z);
    }
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      cam = {rng.uniform(lo_x, hi_x), rng.uniform(lo_z, hi_z)};
      // Inside with margin, and on the inner side of every wall line so all
      // walls are fully visible (single wall crossing per column).
      bool ok = true;
      for (size_t i = 0; ok && i < poly.size(); ++i) {
        ok = edge_signed_dist(poly[i], poly[(i + 1) % poly.size()], cam) >=
             0.3;
      }
      // Corner distances that keep boundary latitudes well off the horizon
      // and the zenith.
      std::vector<double> us;
      for (const Vec2& v : poly) {
        if (!ok) break;
        const double d = std::hypot(v.x - cam.x, v.z - cam.z);
        ok = d >= 0.45 && d <= 4.5;
        us.push_back(((std::atan2(v.x - cam.x, v.z - cam.z)) / kTwoPi + 0.5) *
                     double(width));
      }
      if (ok) {
        std::sort(us.begin(), us.end());
        for (size_t i = 0; ok && i < us.size(); ++i) {
          ok = circ_gap(us[i], us[(i + 1) % us.size()], double(width)) >=
               min_gap;
        }
      }
      placed = ok;
    }
  }
  for (Vec2& v : poly) {
    v.x -= cam.x;
    v.z -= cam.z;
  }
  const double ceil_h = rng.uniform(0.8, 2.0);

  Sample s;
  s.id = id;
  s.ceil_height = ceil_h;
  s.plan.floor_y = -1.0;
  s.plan.ceil_y = ceil_h;
  for (const Vec2& v : poly) s.plan.vertices.push_back({v.x, v.z});
  s.annotation = annotate(poly, ceil_h, width, height);
  s.boundaries = corners_to_boundaries(s.annotation, width, height);
  s.image = render(poly, s.annotation, s.boundaries, width, height);
  return s;
}

Sample load_sample(const std::string& image_path,
                   const std::string& annot_path, size_t width,
                   size_t height) {
  Tensor raw = read_image(image_path);
  CornerAnnotation ann = read_corner_file(annot_path);
  const size_t h0 = raw.dim(1), w0 = raw.dim(2);

  Sample s;
  s.image = (h0 == height && w0 == width)
                ? std::move(raw)
                : resize_bilinear(raw, height, width);
  const double su = double(width) / double(w0);
  const double sv = double(height) / double(h0);
  for (CornerPair& p : ann.pairs) {
    p.u *= su;
    p.v_ceil *= sv;
    p.v_floor *= sv;
  }
  s.annotation = std::move(ann);
  s.boundaries = corners_to_boundaries(s.annotation, width, height);
  s.id = std::filesystem::path(image_path).stem().string();
  s.plan = boundaries_to_floorplan(s.boundaries,
                                   corner_columns(s.annotation, width));
  s.ceil_height = s.plan.ceil_y;
  return s;
}

Sample flip_sample(const Sample& s) {
  const size_t W = s.width(), H = s.height();
  Sample out;
  out.id = s.id;
  out.ceil_height = s.ceil_height;
  out.image = Tensor({3, H, W});
  for (size_t c = 0; c < 3; ++c)
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x)
        out.image.at(c, y, W - 1 - x) = s.image.at(c, y, x);
  for (const CornerPair& p : s.annotation.pairs) {
    // Pixel centers sit at half-integers, so the mirror of u is W - u.
    double u = double(W) - p.u;
    if (u >= double(W)) u -= double(W);
    out.annotation.pairs.push_back({u, p.v_ceil, p.v_floor});
  }
  std::sort(out.annotation.pairs.begin(), out.annotation.pairs.end(),
            [](const CornerPair& a, const CornerPair& b) { return a.u < b.u; });
  out.boundaries = corners_to_boundaries(out.annotation, W, H);
  // Mirroring longitude negates x; reverse to stay counterclockwise.
  for (auto it = s.plan.vertices.rbegin(); it != s.plan.vertices.rend(); ++it)
    out.plan.vertices.push_back({-(*it)[0], (*it)[1]});
  out.plan.floor_y = s.plan.floor_y;
  out.plan.ceil_y = s.plan.ceil_y;
  return out;
}

Sample roll_sample(const Sample& s, size_t delta) {
  const size_t W = s.width(), H = s.height();
  delta %= W;
  Sample out;
  out.id = s.id;
  out.ceil_height = s.ceil_height;
  out.image = Tensor({3, H, W});
  for (size_t c = 0; c < 3; ++c)
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < W; ++x)
        out.image.at(c, y, (x + delta) % W) = s.image.at(c, y, x);
  for (const CornerPair& p : s.annotation.pairs) {
    double u = p.u + double(delta);
    if (u >= double(W)) u -= double(W);
    out.annotation.pairs.push_back({u, p.v_ceil, p.v_floor});
  }
  std::sort(out.annotation.pairs.begin(), out.annotation.pairs.end(),
            [](const CornerPair& a, const CornerPair& b) { return a.u < b.u; });
  out.boundaries = corners_to_boundaries(out.annotation, W, H);
  // A column shift is a rotation about the vertical axis.
  const double th = kTwoPi * double(delta) / double(W);
  const double ct = std::cos(th), st = std::sin(th);
  for (const auto& v : s.plan.vertices)
    out.plan.vertices.push_back(
        {v[0] * ct + v[1] * st, v[1] * ct - v[0] * st});
  out.plan.floor_y = s.plan.floor_y;
  out.plan.ceil_y = s.plan.ceil_y;
  return out;
}

Sample gamma_sample(const Sample& s, double g) {
  Sample out = s;
  for (size_t i = 0; i < out.image.size(); ++i)
    out.image[i] = std::pow(std::clamp(out.image[i], 0.0, 1.0), g);
  return out;
}

Sample mask_sample(const Sample& s, Rng& rng, size_t count) {
  const size_t W = s.width(), H = s.height();
  const size_t side =
      std::max<size_t>(1, size_t(std::lround(50.0 * double(W) / 1024.0)));
  Sample out = s;
  for (size_t k = 0; k < count; ++k) {
    const size_t x0 = size_t(rng.uniform_int(int64_t(W - side + 1)));
    const size_t y0 = size_t(rng.uniform_int(int64_t(H - side + 1)));
    for (size_t c = 0; c < 3; ++c)
      for (size_t y = y0; y < y0 + side; ++y)
        for (size_t x = x0; x < x0 + side; ++x) out.image.at(c, y, x) = 0.0;
  }
  return out;
}

Sample augment(const Sample& s, Rng& rng, const AugmentFlags& flags) {
  Sample out = s;
  if (flags.flip && rng.uniform() < 0.5) out = flip_sample(out);
  if (flags.roll)
    out = roll_sample(out, size_t(rng.uniform_int(int64_t(out.width()))));
  if (flags.gamma) out = gamma_sample(out, rng.uniform(0.5, 2.0));
  if (flags.masks) out = mask_sample(out, rng);
  return out;
}

std::vector<std::pair<std::string, std::string>> read_manifest(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? p : (base / q).string();
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw IoError("manifest " + path + " line " + std::to_string(lineno) +
                    ": expected image<TAB>annotation");
    }
    out.emplace_back(resolve(line.substr(0, tab)),
                     resolve(line.substr(tab + 1)));
  }
  return out;
}

}  // namespace panokit
