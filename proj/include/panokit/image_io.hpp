#pragma once

#include <string>

#include "panokit/tensor.hpp"

namespace panokit {

// Decodes an 8-bit PNG or JPEG into [3,H,W], RGB, scaled to [0,1].
// Throws IoError when the file is missing or not a decodable image.
Tensor read_image(const std::string& path);

// Writes [3,H,W] as an 8-bit image; values are clamped to [0,1] first. The
// format follows the file extension. Throws IoError when encoding fails.
void write_image(const Tensor& image, const std::string& path);

// Separable endpoint-aligned bilinear resample of a [C,H,W] tensor.
Tensor resize_bilinear(const Tensor& image, size_t out_h, size_t out_w);

// Lossless tensor round trip: a one-line text header (shape) followed by raw
// native-endian doubles. read_tensor_raw(write_tensor_raw(t)) == t bit for
// bit.
void write_tensor_raw(const Tensor& t, const std::string& path);
Tensor read_tensor_raw(const std::string& path);

}  // namespace panokit
