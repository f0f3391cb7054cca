#pragma once

#include <cmath>
#include <vector>

#include "panokit/rng.hpp"
#include "panokit/tensor.hpp"

#define CHECK_CLOSE(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))

namespace testutil {

inline panokit::Tensor rand_tensor(std::vector<size_t> shape, panokit::Rng& rng,
                                   double lo = -1.0, double hi = 1.0) {
  panokit::Tensor t(std::move(shape));
  for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Reference product, written independently of the library kernel.
inline panokit::Tensor matmul_oracle(const panokit::Tensor& a,
                                     const panokit::Tensor& b) {
  size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  panokit::Tensor c({m, n});
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double s = 0;
      for (size_t l = 0; l < k; ++l) s += a.at(i, l) * b.at(l, j);
      c.at(i, j) = s;
    }
  return c;
}

// Reference convolution: plain loops over every output element and tap.
inline panokit::Tensor conv2d_oracle(const panokit::Tensor& in,
                                     const panokit::Tensor& ker,
                                     const panokit::Tensor& bias, size_t sh,
                                     size_t sw, size_t ph, size_t pw) {
  size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
  size_t K = ker.dim(0), kh = ker.dim(2), kw = ker.dim(3);
  size_t OH = (H + 2 * ph - kh) / sh + 1;
  size_t OW = (W + 2 * pw - kw) / sw + 1;
  panokit::Tensor out({K, OH, OW});
  for (size_t k = 0; k < K; ++k)
    for (size_t oh = 0; oh < OH; ++oh)
      for (size_t ow = 0; ow < OW; ++ow) {
        double acc = bias.size() ? bias[k] : 0.0;
        for (size_t c = 0; c < C; ++c)
          for (size_t i = 0; i < kh; ++i)
            for (size_t j = 0; j < kw; ++j) {
              long ih = long(oh * sh + i) - long(ph);
              long iw = long(ow * sw + j) - long(pw);
              if (ih < 0 || ih >= long(H) || iw < 0 || iw >= long(W)) continue;
              acc += ker.at(k, c, i, j) * in.at(c, size_t(ih), size_t(iw));
            }
        out.at(k, oh, ow) = acc;
      }
  return out;
}

inline double max_abs_diff(const panokit::Tensor& a, const panokit::Tensor& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testutil
