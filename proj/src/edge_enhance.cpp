#include "panokit/edge_enhance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "panokit/error.hpp"

namespace panokit {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, forward kernel exp(-2*pi*i*jk/n).
void fft_pow2(std::vector<cd>& x) {
  const size_t n = x.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  // Twiddles from polar() per index rather than recurrences: O(n) memory,
  // no accumulated drift.
  std::vector<cd> tw(n / 2);
  for (size_t j = 0; j < n / 2; ++j) {
    tw[j] = std::polar(1.0, -2.0 * kPi * static_cast<double>(j) / static_cast<double>(n));
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    size_t stride = n / len;
    for (size_t i = 0; i < n; i += len) {
      for (size_t j = 0; j < len / 2; ++j) {
        cd w = tw[j * stride];
        cd a = x[i + j];
        cd b = x[i + j + len / 2] * w;
        x[i + j] = a + b;
        x[i + j + len / 2] = a - b;
      }
    }
  }
}

// Bluestein's chirp-z for arbitrary n, built on a power-of-two convolution.
// Phases use j^2 mod 2n so the sin/cos arguments stay small and exact.
void fft_bluestein(std::vector<cd>& x) {
  const size_t n = x.size();
  size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<cd> chirp(n);
  for (size_t j = 0; j < n; ++j) {
    size_t jj = (j * j) % (2 * n);
    chirp[j] = std::polar(1.0, -kPi * static_cast<double>(jj) / static_cast<double>(n));
  }
  std::vector<cd> a(m), b(m);
  for (size_t j = 0; j < n; ++j) a[j] = x[j] * chirp[j];
  b[0] = std::conj(chirp[0]);
  for (size_t j = 1; j < n; ++j) {
    b[j] = std::conj(chirp[j]);
    b[m - j] = b[j];
  }
  fft_pow2(a);
  fft_pow2(b);
  for (size_t j = 0; j < m; ++j) a[j] *= b[j];
  // Inverse of the helper transform: conjugate trick plus 1/m.
  for (auto& v : a) v = std::conj(v);
  fft_pow2(a);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (size_t k = 0; k < n; ++k) x[k] = chirp[k] * std::conj(a[k]) * inv_m;
}

void fft_forward(std::vector<cd>& x) {
  if (x.size() <= 1) return;
  if (is_pow2(x.size())) {
    fft_pow2(x);
  } else {
    fft_bluestein(x);
  }
}

}  // namespace

void fft1d(std::vector<cd>& x, bool inverse) {
  if (!inverse) {
    fft_forward(x);
    return;
  }
  for (auto& v : x) v = std::conj(v);
  fft_forward(x);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  for (auto& v : x) v = std::conj(v) * inv_n;
}

namespace {

// Transforms all rows then all columns of a raw (uncentered) grid.
void fft2_raw(std::vector<cd>& g, size_t h, size_t w, bool inverse) {
  std::vector<cd> line;
  for (size_t r = 0; r < h; ++r) {
    line.assign(g.begin() + static_cast<std::ptrdiff_t>(r * w),
                g.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
    fft1d(line, inverse);
    std::copy(line.begin(), line.end(), g.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  line.resize(h);
  for (size_t c = 0; c < w; ++c) {
    for (size_t r = 0; r < h; ++r) line[r] = g[r * w + c];
    fft1d(line, inverse);
    for (size_t r = 0; r < h; ++r) g[r * w + c] = line[r];
  }
}

std::vector<cd> shift2d(const std::vector<cd>& g, size_t h, size_t w,
                        size_t sh, size_t sw) {
  std::vector<cd> out(g.size());
  for (size_t r = 0; r < h; ++r) {
    size_t rr = (r + sh) % h;
    for (size_t c = 0; c < w; ++c) out[rr * w + (c + sw) % w] = g[r * w + c];
  }
  return out;
}

}  // namespace

Spectrum fft2(const Tensor& channel) {
  if (channel.ndim() != 2) throw DimensionError("fft2: expected a [H,W] tensor");
  const size_t h = channel.dim(0), w = channel.dim(1);
  std::vector<cd> g(h * w);
  for (size_t i = 0; i < h * w; ++i) g[i] = channel[i];
  fft2_raw(g, h, w, false);
  Spectrum s(h, w);
  s.bins = shift2d(g, h, w, h / 2, w / 2);
  return s;
}

Tensor ifft2(const Spectrum& s) {
  const size_t h = s.height, w = s.width;
  if (h == 0 || w == 0 || s.bins.size() != h * w) {
    throw DimensionError("ifft2: malformed spectrum");
  }
  std::vector<cd> g = shift2d(s.bins, h, w, h - h / 2, w - w / 2);
  fft2_raw(g, h, w, true);
  double max_re = 0.0, max_im = 0.0;
  for (const cd& v : g) {
    max_re = std::max(max_re, std::abs(v.real()));
    max_im = std::max(max_im, std::abs(v.imag()));
  }
  if (max_im > 1e-6 * max_re) {
    throw SymmetryViolationError(
        "ifft2: imaginary residue " + std::to_string(max_im) +
        " exceeds tolerance; spectrum is not Hermitian-symmetric");
  }
  Tensor out({h, w});
  for (size_t i = 0; i < h * w; ++i) out[i] = g[i].real();
  return out;
}

Tensor direction_grid(size_t height, size_t width) {
  Tensor d({height, width});
  const double u0 = static_cast<double>(height / 2);
  const double v0 = static_cast<double>(width / 2);
  for (size_t u = 0; u < height; ++u) {
    for (size_t v = 0; v < width; ++v) {
      d.at(u, v) = std::atan2(std::abs(static_cast<double>(u) - u0),
                              std::abs(static_cast<double>(v) - v0)) *
                   (180.0 / kPi);
    }
  }
  return d;
}

double effective_theta(const FreqMaskParams& p, size_t height, size_t width) {
  if (!p.scale_theta) return p.theta;
  return p.theta * static_cast<double>(std::min(height, width)) / 512.0;
}

std::pair<Tensor, Tensor> build_masks(const FreqMaskParams& p, size_t height,
                                      size_t width) {
  if (!(p.alpha > 0.0 && p.alpha < p.beta && p.beta < 90.0)) {
    throw ConfigError("build_masks: need 0 < alpha < beta < 90");
  }
  const double theta = effective_theta(p, height, width);
  if (!(theta >= 0.0)) throw ConfigError("build_masks: theta must be >= 0");
  Tensor dir = direction_grid(height, width);
  Tensor mv({height, width}), mh({height, width});
  const double u0 = static_cast<double>(height / 2);
  const double v0 = static_cast<double>(width / 2);
  for (size_t u = 0; u < height; ++u) {
    for (size_t v = 0; v < width; ++v) {
      double r = std::hypot(static_cast<double>(u) - u0,
                            static_cast<double>(v) - v0);
      bool high = r > theta;
      mv.at(u, v) = (high && dir.at(u, v) < p.alpha) ? 1.0 : 0.0;
      mh.at(u, v) = (high && dir.at(u, v) >= p.beta) ? 1.0 : 0.0;
    }
  }
  return {std::move(mv), std::move(mh)};
}

namespace {

// Z-score in place; an (almost) constant map collapses to zeros instead of
// amplifying rounding noise.
void normalize_map(Tensor& e) {
  const size_t n = e.size();
  double mean = e.sum() / static_cast<double>(n);
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double d = e[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  double sd = std::sqrt(var);
  if (sd < 1e-12) {
    e.zero();
    return;
  }
  for (size_t i = 0; i < n; ++i) e[i] = (e[i] - mean) / sd;
}

}  // namespace

Tensor enhance(const Tensor& image, const FreqMaskParams& params) {
  if (image.ndim() != 3) throw DimensionError("enhance: expected [C,H,W]");
  const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor gray({h, w});
  gray.zero();
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t i = 0; i < h * w; ++i) gray[i] += image[ch * h * w + i];
  }
  const double inv_c = 1.0 / static_cast<double>(c);
  for (size_t i = 0; i < h * w; ++i) gray[i] *= inv_c;

  Spectrum spec = fft2(gray);
  auto [mv, mh] = build_masks(params, h, w);
  Spectrum sv(h, w), sh(h, w);
  for (size_t i = 0; i < h * w; ++i) {
    sv.bins[i] = spec.bins[i] * mv[i];
    sh.bins[i] = spec.bins[i] * mh[i];
  }
  Tensor ev = ifft2(sv);
  Tensor eh = ifft2(sh);
  normalize_map(ev);
  normalize_map(eh);

  Tensor out({c + 2, h, w});
  std::copy(image.ptr(), image.ptr() + c * h * w, out.ptr());
  std::copy(ev.ptr(), ev.ptr() + h * w, out.ptr() + c * h * w);
  std::copy(eh.ptr(), eh.ptr() + h * w, out.ptr() + (c + 1) * h * w);
  return out;
}

}  // namespace panokit
