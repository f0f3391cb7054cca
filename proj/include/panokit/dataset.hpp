#pragma once

#include <string>
#include <utility>
#include <vector>

#include "panokit/geometry.hpp"
#include "panokit/rng.hpp"
#include "panokit/tensor.hpp"

namespace panokit {

// One panorama with its layout labels. boundaries is always the rendering of
// annotation via corners_to_boundaries at the image's extents. ceil_height
// and plan carry the room geometry for the 3-D loss and IoU scoring (exact
// for synthetic rooms, reconstructed from the annotation for loaded ones).
struct Sample {
  Tensor image;  // [3,H,W] in [0,1]
  CornerAnnotation annotation;
  LayoutBoundaries boundaries;
  std::string id;
  double ceil_height = 1.0;
  FloorPlan plan;

  size_t height() const { return image.dim(1); }
  size_t width() const { return image.dim(2); }
};

// Decodes an 8-bit PNG/JPEG, bilinearly resizes it to H x W, rescales the
// corner annotation proportionally, and renders the boundaries. Throws
// IoError on unreadable files and InvalidAnnotationError on malformed
// annotations.
Sample load_sample(const std::string& image_path,
                   const std::string& annot_path, size_t width, size_t height);

// Deterministic augmentation primitives. Each keeps the labels consistent:
// geometric ops remap the corners and re-render the boundaries, and the
// ground-truth plan is transformed with the image.
Sample flip_sample(const Sample& s);
Sample roll_sample(const Sample& s, size_t delta);
Sample gamma_sample(const Sample& s, double g);
// Zeroes `count` square cutouts with side max(1, round(50*W/1024)) at
// uniform positions. Labels are untouched.
Sample mask_sample(const Sample& s, Rng& rng, size_t count = 50);

struct AugmentFlags {
  bool flip = true;   // mirror with probability 1/2
  bool roll = true;   // circular shift by uniform delta in [0, W)
  bool gamma = true;  // pixel^g with g uniform in [0.5, 2]
  bool masks = true;  // 50 random square cutouts
};

Sample augment(const Sample& s, Rng& rng, const AugmentFlags& flags);

enum class RoomKind { Box, LShape };

// Random synthetic room with exact labels: a box (4 wall corners) or an
// L-shape (6), flat-shaded with one hue per wall and anti-aliased boundary
// lines, camera at the origin, floor at y=-1. Deterministic given the RNG
// state.
Sample synth_room(Rng& rng, RoomKind kind, size_t width, size_t height);

// Manifest: one "image_path<TAB>annot_path" per line; blank lines are
// skipped. Relative paths are resolved against the manifest's directory.
std::vector<std::pair<std::string, std::string>> read_manifest(
    const std::string& path);

// Nearest image column of each corner, ascending and deduplicated.
std::vector<size_t> corner_columns(const CornerAnnotation& ann, size_t width);

}  // namespace panokit
