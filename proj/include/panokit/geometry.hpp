#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "panokit/tensor.hpp"

namespace panokit {

// Angles are radians. Longitude delta in [-pi, pi), latitude gamma in
// [-pi/2, pi/2] with +pi/2 at the zenith (image top). The camera sits at the
// origin with y up; the floor plane is y = -1 (camera height normalized to 1).
struct SpherePoint {
  double delta = 0.0;
  double gamma = 0.0;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Per-column layout description of width W: ceiling-wall latitude y_c (> 0),
// floor-wall latitude y_f (< 0), wall-wall corner probability y_w in [0,1].
struct LayoutBoundaries {
  Tensor y_c, y_f, y_w;  // each shape [W]
  LayoutBoundaries() = default;
  explicit LayoutBoundaries(size_t width)
      : y_c({width}), y_f({width}), y_w({width}) {}
  size_t width() const { return y_c.size(); }
};

// Horizontal floor polygon plus floor/ceiling plane heights. Vertices are
// (x, z) counterclockwise; ceil_y > 0 > floor_y.
struct FloorPlan {
  std::vector<std::array<double, 2>> vertices;
  double floor_y = -1.0;
  double ceil_y = 1.0;
};

// One wall-wall corner: ceiling point (u, v_ceil) above floor point
// (u, v_floor) at a shared image column. v_ceil < v_floor (image rows grow
// downward).
struct CornerPair {
  double u = 0.0;
  double v_ceil = 0.0;
  double v_floor = 0.0;
};

// Ordered left-to-right; at least 4 corners for a closed room.
struct CornerAnnotation {
  std::vector<CornerPair> pairs;
};

// Continuous pixel coordinates: pixel index i is sampled at i + 0.5, so
// u in [0, W], v in [0, H] spans the full panorama.
SpherePoint pixel_to_sphere(double u, double v, size_t width, size_t height);
std::pair<double, double> sphere_to_pixel(const SpherePoint& p, size_t width,
                                          size_t height);

// Spherical to Cartesian at range s: x = s cos(gamma) sin(delta),
// y = s sin(gamma), z = s cos(delta) cos(gamma).
Point3 sphere_to_3d(const SpherePoint& p, double s);

// Latitudes closer than this to the horizon cannot be projected to a
// horizontal plane with usable precision.
inline constexpr double kGammaMin = 1e-3;

// Intersects the ray through p with the horizontal plane y = plane_y.
// Requires sign(gamma) == sign(plane_y) and |gamma| > gamma_min; throws
// HorizonDegenerateError otherwise. Result has y == plane_y exactly.
Point3 project_to_plane(const SpherePoint& p, double plane_y,
                        double gamma_min = kGammaMin);

// Renders per-column ground truth from a corner annotation. Floor corners are
// projected to y=-1; the wall polygon is intersected with every column's
// camera ray to get the wall distance d, giving y_f = -atan(1/d) and
// y_c = atan(h/d) with h the mean per-corner ceiling height. y_w is 1 at the
// column nearest each corner, else 0. Throws InvalidAnnotationError when the
// annotation is malformed or the camera lies outside the wall polygon.
LayoutBoundaries corners_to_boundaries(const CornerAnnotation& ann,
                                       size_t width, size_t height);

// Local maxima of y_w above thresh, greedily accepted by descending value
// while suppressing candidates closer than min_sep columns (circular).
// Returns ascending column indices; throws DegenerateLayoutError when fewer
// than 3 peaks survive. The overload defaults min_sep to W/64.
std::vector<size_t> peak_find(const Tensor& y_w, size_t min_sep,
                              double thresh = 0.5);
std::vector<size_t> peak_find(const Tensor& y_w);

// Projects each peak column's floor latitude to a floor vertex and estimates
// ceil_y as the median over columns of tan(y_c) * d(column). floor_y is -1.
FloorPlan boundaries_to_floorplan(const LayoutBoundaries& b,
                                  const std::vector<size_t>& peaks);

// Signed shoelace area: positive for counterclockwise vertex order.
double polygon_area(const std::vector<std::array<double, 2>>& vertices);

// Intersection-over-union of floor polygons (iou2d) and of the room prisms
// they bound (iou3d), via even-odd rasterization of both polygons over their
// joint bounding box at grid x grid samples. Throws UndefinedMetricError when
// the union is empty.
double iou2d(const FloorPlan& a, const FloorPlan& b, size_t grid = 1024);
double iou3d(const FloorPlan& a, const FloorPlan& b, size_t grid = 1024);

// Corner annotation text: one "u v" pair per line, alternating ceiling/floor,
// left-to-right. Parsing validates structure (even count >= 8 points, shared
// u per pair within half a pixel, ceiling above floor, strictly increasing u).
CornerAnnotation read_corner_file(const std::string& path);
void write_corner_file(const CornerAnnotation& ann, const std::string& path);

// Structured-text round trips for results.
FloorPlan read_floorplan_doc(const std::string& path);
void write_floorplan_doc(const FloorPlan& plan, const std::string& path);
LayoutBoundaries read_boundaries_doc(const std::string& path,
                                     std::vector<size_t>* corner_cols = nullptr);
void write_boundaries_doc(const LayoutBoundaries& b,
                          const std::vector<size_t>& corner_cols,
                          const std::string& path);

}  // namespace panokit
