#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "panokit/tensor.hpp"

namespace panokit {

// Centered 2-D spectrum: zero frequency sits at (height/2, width/2)
// (integer division). Real input makes this Hermitian-symmetric about that
// center.
struct Spectrum {
  size_t height = 0;
  size_t width = 0;
  std::vector<std::complex<double>> bins;  // row-major

  Spectrum() = default;
  Spectrum(size_t h, size_t w) : height(h), width(w), bins(h * w) {}
  std::complex<double>& at(size_t u, size_t v) { return bins[u * width + v]; }
  const std::complex<double>& at(size_t u, size_t v) const {
    return bins[u * width + v];
  }
};

// In-place 1-D transform of any length >= 1: radix-2 when the length is a
// power of two, Bluestein's chirp-z otherwise. The inverse scales by 1/n.
void fft1d(std::vector<std::complex<double>>& x, bool inverse);

// Forward transform of a real [H,W] channel, centered. No normalization.
Spectrum fft2(const Tensor& channel);

// Real part of the inverse transform. Throws SymmetryViolationError when the
// imaginary residue exceeds 1e-6 of the real peak — the signal that a mask
// broke Hermitian symmetry.
Tensor ifft2(const Spectrum& s);

// Unsigned angle (degrees, in [0, 90]) of each bin's offset from the
// horizontal frequency axis: atan2(|u - u0|, |v - v0|) * 180/pi. Center = 0.
Tensor direction_grid(size_t height, size_t width);

// Directional high-pass band edges (degrees) and radial cutoff (bins).
// theta is calibrated for 512-pixel inputs; when scale_theta is set the
// effective cutoff is theta * min(H, W) / 512.
struct FreqMaskParams {
  double alpha = 20.0;
  double beta = 25.0;
  double theta = 100.0;
  bool scale_theta = true;
};

double effective_theta(const FreqMaskParams& p, size_t height, size_t width);

// Binary masks on the centered grid: M_v keeps near-horizontal directions
// (D < alpha), M_h keeps near-vertical ones (D >= beta), both only outside
// radius effective_theta(p, height, width). Disjoint by construction since
// alpha < beta; symmetric about the center, so masked spectra stay Hermitian.
// Throws ConfigError on invalid params.
std::pair<Tensor, Tensor> build_masks(const FreqMaskParams& p, size_t height,
                                      size_t width);

// Appends two edge channels to a [C,H,W] image: the grayscale (channel mean)
// is transformed, masked by M_v / M_h, inverted, and z-score normalized
// (zero-variance maps become zeros). Output is [C+2,H,W].
Tensor enhance(const Tensor& image, const FreqMaskParams& params);

}  // namespace panokit
