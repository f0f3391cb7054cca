#include "panokit/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "panokit/error.hpp"
#include "panokit/ops.hpp"

namespace panokit {

Tensor read_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot decode image: " + path);
  const size_t h = size_t(bgr.rows), w = size_t(bgr.cols);
  Tensor out({3, h, w});
  for (size_t y = 0; y < h; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(int(y));
    for (size_t x = 0; x < w; ++x) {
      out.at(0, y, x) = double(row[x][2]) / 255.0;
      out.at(1, y, x) = double(row[x][1]) / 255.0;
      out.at(2, y, x) = double(row[x][0]) / 255.0;
    }
  }
  return out;
}

void write_image(const Tensor& image, const std::string& path) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw DimensionError("write_image: expected [3,H,W]");
  const size_t h = image.dim(1), w = image.dim(2);
  cv::Mat bgr(int(h), int(w), CV_8UC3);
  for (size_t y = 0; y < h; ++y) {
    cv::Vec3b* row = bgr.ptr<cv::Vec3b>(int(y));
    for (size_t x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(size_t(c), y, x), 0.0, 1.0);
        row[x][2 - c] = uchar(std::lround(v * 255.0));
      }
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path, bgr);
  } catch (const cv::Exception& e) {
    throw IoError("cannot encode " + path + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write image: " + path);
}

Tensor resize_bilinear(const Tensor& image, size_t out_h, size_t out_w) {
  if (image.ndim() != 3) throw DimensionError("resize_bilinear: need [C,H,W]");
  const size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  // Width pass over [C*H, W] rows, then height pass over transposed columns;
  // both reuse the 1-D endpoint-aligned resampler.
  Tensor wide = resize_linear(image.reshaped({C * H, W}), out_w);
  Tensor cols({C * out_w, H});
  for (size_t c = 0; c < C; ++c)
    for (size_t y = 0; y < H; ++y)
      for (size_t x = 0; x < out_w; ++x)
        cols.at(c * out_w + x, y) = wide.at(c * H + y, x);
  Tensor tall = resize_linear(cols, out_h);
  Tensor out({C, out_h, out_w});
  for (size_t c = 0; c < C; ++c)
    for (size_t y = 0; y < out_h; ++y)
      for (size_t x = 0; x < out_w; ++x)
        out.at(c, y, x) = tall.at(c * out_w + x, y);
  return out;
}

void write_tensor_raw(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "panokit-tensor 1";
  for (size_t i = 0; i < t.ndim(); ++i) out << " " << t.dim(i);
  out << "\n";
  out.write(reinterpret_cast<const char*>(t.ptr()),
            std::streamsize(t.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path);
}

Tensor read_tensor_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "panokit-tensor" || version != 1)
    throw IoError("not a tensor dump: " + path);
  std::string rest;
  std::getline(in, rest);
  std::vector<size_t> shape;
  size_t v = 0;
  for (std::istringstream dims(rest); dims >> v;) shape.push_back(v);
  if (shape.empty()) throw IoError("tensor dump has no shape: " + path);
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.ptr()),
          std::streamsize(t.size() * sizeof(double)));
  if (size_t(in.gcount()) != t.size() * sizeof(double))
    throw IoError("tensor dump truncated: " + path);
  return t;
}

}  // namespace panokit
