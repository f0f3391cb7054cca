#include "panokit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "panokit/error.hpp"

namespace panokit {

namespace detail {

void mm_add(const double* a, const double* b, double* c, size_t m, size_t k,
            size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (size_t l = 0; l < k; ++l) {
      double av = ai[l];
      const double* bl = b + l * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
}

void mm(const double* a, const double* b, double* c, size_t m, size_t k,
        size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  mm_add(a, b, c, m, k, n);
}

void mm_at(const double* a, const double* b, double* c, size_t k, size_t m,
           size_t n) {
  std::memset(c, 0, m * n * sizeof(double));
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (size_t l = 0; l < k; ++l) {
      double av = a[l * m + i];
      const double* bl = b + l * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
}

void mm_bt(const double* a, const double* b, double* c, size_t m, size_t k,
           size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      size_t l = 0;
      for (; l + 4 <= k; l += 4) {
        s0 += ai[l] * bj[l];
        s1 += ai[l + 1] * bj[l + 1];
        s2 += ai[l + 2] * bj[l + 2];
        s3 += ai[l + 3] * bj[l + 3];
      }
      for (; l < k; ++l) s0 += ai[l] * bj[l];
      ci[j] = (s0 + s1) + (s2 + s3);
    }
  }
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes");
  Tensor c({a.dim(0), b.dim(1)});
  detail::mm(a.ptr(), b.ptr(), c.ptr(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout,
                     Tensor& da, Tensor& db) {
  size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (dout.ndim() != 2 || dout.dim(0) != m || dout.dim(1) != n)
    throw DimensionError("matmul_backward: bad dout shape");
  da = Tensor({m, k});
  db = Tensor({k, n});
  detail::mm_bt(dout.ptr(), b.ptr(), da.ptr(), m, n, k);  // da = dout b^T
  detail::mm_at(a.ptr(), dout.ptr(), db.ptr(), m, k, n);  // db = a^T dout
}

// ---------------------------------------------------------------------------
// conv2d, lowered to a matrix product over unrolled input patches.

struct ConvDims {
  size_t C, H, W, K, kh, kw, OH, OW;
};

static ConvDims conv_dims(const Tensor& input, const Tensor& kernels,
                          const ConvSpec& s) {
  if (input.ndim() != 3) throw DimensionError("conv2d: input must be [C,H,W]");
  if (kernels.ndim() != 4)
    throw DimensionError("conv2d: kernels must be [K,C,kh,kw]");
  if (kernels.dim(1) != input.dim(0))
    throw DimensionError("conv2d: channel mismatch");
  if (s.stride_h == 0 || s.stride_w == 0)
    throw ConfigError("conv2d: zero stride");
  ConvDims d;
  d.C = input.dim(0);
  d.H = input.dim(1);
  d.W = input.dim(2);
  d.K = kernels.dim(0);
  d.kh = kernels.dim(2);
  d.kw = kernels.dim(3);
  long oh = (long(d.H) + 2 * long(s.pad_h) - long(d.kh)) / long(s.stride_h) + 1;
  long ow = (long(d.W) + 2 * long(s.pad_w) - long(d.kw)) / long(s.stride_w) + 1;
  if (long(d.H) + 2 * long(s.pad_h) < long(d.kh) ||
      long(d.W) + 2 * long(s.pad_w) < long(d.kw) || oh < 1 || ow < 1)
    throw DimensionError("conv2d: non-positive output extent");
  d.OH = size_t(oh);
  d.OW = size_t(ow);
  return d;
}

static void im2col(const Tensor& in, const ConvDims& d, const ConvSpec& s,
                   std::vector<double>& cols) {
  size_t patch = d.C * d.kh * d.kw;
  cols.assign(patch * d.OH * d.OW, 0.0);
  const double* src = in.ptr();
  for (size_t c = 0; c < d.C; ++c)
    for (size_t i = 0; i < d.kh; ++i)
      for (size_t j = 0; j < d.kw; ++j) {
        double* row = cols.data() + ((c * d.kh + i) * d.kw + j) * d.OH * d.OW;
        for (size_t oh = 0; oh < d.OH; ++oh) {
          long ih = long(oh * s.stride_h + i) - long(s.pad_h);
          if (ih < 0 || ih >= long(d.H)) continue;
          const double* srow = src + (c * d.H + size_t(ih)) * d.W;
          double* drow = row + oh * d.OW;
          for (size_t ow = 0; ow < d.OW; ++ow) {
            long iw = long(ow * s.stride_w + j) - long(s.pad_w);
            if (iw >= 0 && iw < long(d.W)) drow[ow] = srow[iw];
          }
        }
      }
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const ConvSpec& spec) {
  ConvDims d = conv_dims(input, kernels, spec);
  if (bias.size() != 0 && (bias.ndim() != 1 || bias.dim(0) != d.K))
    throw DimensionError("conv2d: bias must be [K]");
  std::vector<double> cols;
  im2col(input, d, spec, cols);
  Tensor out({d.K, d.OH, d.OW});
  detail::mm(kernels.ptr(), cols.data(), out.ptr(), d.K, d.C * d.kh * d.kw,
             d.OH * d.OW);
  if (bias.size() != 0) {
    for (size_t k = 0; k < d.K; ++k) {
      double b = bias[k];
      double* o = out.ptr() + k * d.OH * d.OW;
      for (size_t p = 0; p < d.OH * d.OW; ++p) o[p] += b;
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& kernels,
                     const ConvSpec& spec, const Tensor& dout, Tensor* dinput,
                     Tensor* dkernels, Tensor* dbias) {
  ConvDims d = conv_dims(input, kernels, spec);
  if (dout.ndim() != 3 || dout.dim(0) != d.K || dout.dim(1) != d.OH ||
      dout.dim(2) != d.OW)
    throw DimensionError("conv2d_backward: bad dout shape");
  size_t patch = d.C * d.kh * d.kw, pos = d.OH * d.OW;

  if (dbias) {
    *dbias = Tensor({d.K});
    for (size_t k = 0; k < d.K; ++k) {
      double s = 0;
      const double* o = dout.ptr() + k * pos;
      for (size_t p = 0; p < pos; ++p) s += o[p];
      (*dbias)[k] = s;
    }
  }
  if (dkernels) {
    std::vector<double> cols;
    im2col(input, d, spec, cols);
    *dkernels = Tensor(kernels.shape());
    detail::mm_bt(dout.ptr(), cols.data(), dkernels->ptr(), d.K, pos, patch);
  }
  if (dinput) {
    std::vector<double> dcols(patch * pos);
    detail::mm_at(kernels.ptr(), dout.ptr(), dcols.data(), d.K, patch, pos);
    *dinput = Tensor(input.shape());
    double* din = dinput->ptr();
    for (size_t c = 0; c < d.C; ++c)
      for (size_t i = 0; i < d.kh; ++i)
        for (size_t j = 0; j < d.kw; ++j) {
          const double* row =
              dcols.data() + ((c * d.kh + i) * d.kw + j) * pos;
          for (size_t oh = 0; oh < d.OH; ++oh) {
            long ih = long(oh * spec.stride_h + i) - long(spec.pad_h);
            if (ih < 0 || ih >= long(d.H)) continue;
            double* drow = din + (c * d.H + size_t(ih)) * d.W;
            const double* srow = row + oh * d.OW;
            for (size_t ow = 0; ow < d.OW; ++ow) {
              long iw = long(ow * spec.stride_w + j) - long(spec.pad_w);
              if (iw >= 0 && iw < long(d.W)) drow[iw] += srow[ow];
            }
          }
        }
  }
}

Tensor pad_wrap_x(const Tensor& input, size_t p) {
  if (input.ndim() != 3) throw DimensionError("pad_wrap_x: input must be [C,H,W]");
  size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (p > W) throw DimensionError("pad_wrap_x: pad exceeds width");
  Tensor out({C, H, W + 2 * p});
  for (size_t c = 0; c < C; ++c)
    for (size_t h = 0; h < H; ++h) {
      const double* src = input.ptr() + (c * H + h) * W;
      double* dst = out.ptr() + (c * H + h) * (W + 2 * p);
      std::memcpy(dst + p, src, W * sizeof(double));
      for (size_t x = 0; x < p; ++x) {
        dst[x] = src[W - p + x];
        dst[p + W + x] = src[x];
      }
    }
  return out;
}

Tensor pad_wrap_x_backward(const Tensor& dpadded, size_t p) {
  size_t C = dpadded.dim(0), H = dpadded.dim(1), Wp = dpadded.dim(2);
  size_t W = Wp - 2 * p;
  Tensor din({C, H, W});
  for (size_t c = 0; c < C; ++c)
    for (size_t h = 0; h < H; ++h) {
      const double* src = dpadded.ptr() + (c * H + h) * Wp;
      double* dst = din.ptr() + (c * H + h) * W;
      for (size_t x = 0; x < W; ++x) dst[x] = src[p + x];
      for (size_t x = 0; x < p; ++x) {
        dst[W - p + x] += src[x];
        dst[x] += src[p + W + x];
      }
    }
  return din;
}

// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& x) {
  if (x.ndim() == 0 || x.size() == 0) throw DimensionError("softmax: empty");
  size_t L = x.dim(x.ndim() - 1);
  size_t rows = x.size() / L;
  Tensor y(x.shape());
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * L;
    double* yr = y.ptr() + r * L;
    double mx = xr[0];
    for (size_t i = 1; i < L; ++i) mx = std::max(mx, xr[i]);
    double sum = 0;
    for (size_t i = 0; i < L; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      sum += yr[i];
    }
    for (size_t i = 0; i < L; ++i) yr[i] /= sum;
  }
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_backward");
  size_t L = y.dim(y.ndim() - 1);
  size_t rows = y.size() / L;
  Tensor dx(y.shape());
  for (size_t r = 0; r < rows; ++r) {
    const double* yr = y.ptr() + r * L;
    const double* dyr = dy.ptr() + r * L;
    double* dxr = dx.ptr() + r * L;
    double dot = 0;
    for (size_t i = 0; i < L; ++i) dot += yr[i] * dyr[i];
    for (size_t i = 0; i < L; ++i) dxr[i] = yr[i] * (dyr[i] - dot);
  }
  return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps, LayerNormCache* cache) {
  size_t L = x.dim(x.ndim() - 1);
  if (gain.size() != L || bias.size() != L)
    throw DimensionError("layer_norm: gain/bias must match last axis");
  size_t rows = x.size() / L;
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x.ptr() + r * L;
    double mu = 0;
    for (size_t i = 0; i < L; ++i) mu += xr[i];
    mu /= double(L);
    double var = 0;
    for (size_t i = 0; i < L; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= double(L);
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    double* xh = xhat.ptr() + r * L;
    double* yr = y.ptr() + r * L;
    for (size_t i = 0; i < L; ++i) {
      xh[i] = (xr[i] - mu) * inv;
      yr[i] = xh[i] * gain[i] + bias[i];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                         const Tensor& dy, Tensor& dx, Tensor& dgain,
                         Tensor& dbias) {
  const Tensor& xhat = cache.xhat;
  size_t L = xhat.dim(xhat.ndim() - 1);
  size_t rows = xhat.size() / L;
  dx = Tensor(xhat.shape());
  dgain = Tensor({L});
  dbias = Tensor({L});
  std::vector<double> dxh(L);
  for (size_t r = 0; r < rows; ++r) {
    const double* xh = xhat.ptr() + r * L;
    const double* dyr = dy.ptr() + r * L;
    double* dxr = dx.ptr() + r * L;
    double sum_dxh = 0, sum_dxh_xh = 0;
    for (size_t i = 0; i < L; ++i) {
      dxh[i] = dyr[i] * gain[i];
      sum_dxh += dxh[i];
      sum_dxh_xh += dxh[i] * xh[i];
      dgain[i] += dyr[i] * xh[i];
      dbias[i] += dyr[i];
    }
    double inv = cache.inv_std[r];
    for (size_t i = 0; i < L; ++i)
      dxr[i] = inv * (dxh[i] - sum_dxh / double(L) -
                      xh[i] * sum_dxh_xh / double(L));
  }
}

Act activation_from_name(const std::string& name) {
  if (name == "relu") return Act::Relu;
  if (name == "gelu") return Act::Gelu;
  if (name == "sigmoid") return Act::Sigmoid;
  if (name == "tanh") return Act::Tanh;
  throw ConfigError("unknown activation: " + name);
}

static const double kInvSqrt2 = 0.7071067811865475244;
static const double kInvSqrt2Pi = 0.3989422804014326779;

Tensor activation(const Tensor& x, Act act) {
  Tensor y(x.shape());
  const double* xs = x.ptr();
  double* ys = y.ptr();
  size_t n = x.size();
  switch (act) {
    case Act::Relu:
      for (size_t i = 0; i < n; ++i) ys[i] = xs[i] > 0 ? xs[i] : 0.0;
      break;
    case Act::Gelu:
      for (size_t i = 0; i < n; ++i)
        ys[i] = 0.5 * xs[i] * (1.0 + std::erf(xs[i] * kInvSqrt2));
      break;
    case Act::Sigmoid:
      for (size_t i = 0; i < n; ++i) ys[i] = 1.0 / (1.0 + std::exp(-xs[i]));
      break;
    case Act::Tanh:
      for (size_t i = 0; i < n; ++i) ys[i] = std::tanh(xs[i]);
      break;
  }
  return y;
}

Tensor activation_backward(const Tensor& x, Act act, const Tensor& dy) {
  require_same_shape(x, dy, "activation_backward");
  Tensor dx(x.shape());
  const double* xs = x.ptr();
  const double* dys = dy.ptr();
  double* ds = dx.ptr();
  size_t n = x.size();
  switch (act) {
    case Act::Relu:
      for (size_t i = 0; i < n; ++i) ds[i] = xs[i] > 0 ? dys[i] : 0.0;
      break;
    case Act::Gelu:
      for (size_t i = 0; i < n; ++i) {
        double cdf = 0.5 * (1.0 + std::erf(xs[i] * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * xs[i] * xs[i]);
        ds[i] = dys[i] * (cdf + xs[i] * pdf);
      }
      break;
    case Act::Sigmoid:
      for (size_t i = 0; i < n; ++i) {
        double s = 1.0 / (1.0 + std::exp(-xs[i]));
        ds[i] = dys[i] * s * (1.0 - s);
      }
      break;
    case Act::Tanh:
      for (size_t i = 0; i < n; ++i) {
        double t = std::tanh(xs[i]);
        ds[i] = dys[i] * (1.0 - t * t);
      }
      break;
  }
  return dx;
}

// ---------------------------------------------------------------------------

static void resize_dims(const Tensor& x, size_t new_len, size_t& C, size_t& L) {
  if (new_len == 0) throw DimensionError("resize: non-positive target length");
  if (x.ndim() == 1) {
    C = 1;
    L = x.dim(0);
  } else if (x.ndim() == 2) {
    C = x.dim(0);
    L = x.dim(1);
  } else {
    throw DimensionError("resize: expected [L] or [C,L]");
  }
  if (L == 0) throw DimensionError("resize: empty input");
}

Tensor resize_linear(const Tensor& x, size_t new_len) {
  size_t C, L;
  resize_dims(x, new_len, C, L);
  Tensor out(x.ndim() == 1 ? Tensor({new_len}) : Tensor({C, new_len}));
  for (size_t c = 0; c < C; ++c) {
    const double* src = x.ptr() + c * L;
    double* dst = out.ptr() + c * new_len;
    if (new_len == 1 || L == 1) {
      for (size_t j = 0; j < new_len; ++j) dst[j] = src[0];
      continue;
    }
    double step = double(L - 1) / double(new_len - 1);
    for (size_t j = 0; j < new_len; ++j) {
      double pos = double(j) * step;
      size_t i0 = std::min(size_t(pos), L - 2);
      double w = pos - double(i0);
      dst[j] = (1.0 - w) * src[i0] + w * src[i0 + 1];
    }
  }
  return out;
}

Tensor resize_linear_backward(size_t old_len, size_t new_len,
                              const Tensor& dout) {
  size_t C, NL;
  resize_dims(dout, old_len, C, NL);
  if (NL != new_len) throw DimensionError("resize_linear_backward: bad dout");
  Tensor dx(dout.ndim() == 1 ? Tensor({old_len}) : Tensor({C, old_len}));
  for (size_t c = 0; c < C; ++c) {
    const double* g = dout.ptr() + c * new_len;
    double* dst = dx.ptr() + c * old_len;
    if (new_len == 1 || old_len == 1) {
      for (size_t j = 0; j < new_len; ++j) dst[0] += g[j];
      continue;
    }
    double step = double(old_len - 1) / double(new_len - 1);
    for (size_t j = 0; j < new_len; ++j) {
      double pos = double(j) * step;
      size_t i0 = std::min(size_t(pos), old_len - 2);
      double w = pos - double(i0);
      dst[i0] += (1.0 - w) * g[j];
      dst[i0 + 1] += w * g[j];
    }
  }
  return dx;
}

Tensor resize_circular(const Tensor& x, size_t new_len) {
  size_t C, L;
  resize_dims(x, new_len, C, L);
  Tensor out(x.ndim() == 1 ? Tensor({new_len}) : Tensor({C, new_len}));
  double ratio = double(L) / double(new_len);
  for (size_t c = 0; c < C; ++c) {
    const double* src = x.ptr() + c * L;
    double* dst = out.ptr() + c * new_len;
    for (size_t j = 0; j < new_len; ++j) {
      double pos = (double(j) + 0.5) * ratio - 0.5;
      double f = std::floor(pos);
      double w = pos - f;
      long i0 = (long(f) % long(L) + long(L)) % long(L);
      long i1 = (i0 + 1) % long(L);
      dst[j] = (1.0 - w) * src[i0] + w * src[i1];
    }
  }
  return out;
}

Tensor resize_circular_backward(size_t old_len, size_t new_len,
                                const Tensor& dout) {
  size_t C, NL;
  resize_dims(dout, old_len, C, NL);
  if (NL != new_len) throw DimensionError("resize_circular_backward: bad dout");
  Tensor dx(dout.ndim() == 1 ? Tensor({old_len}) : Tensor({C, old_len}));
  double ratio = double(old_len) / double(new_len);
  for (size_t c = 0; c < C; ++c) {
    const double* g = dout.ptr() + c * new_len;
    double* dst = dx.ptr() + c * old_len;
    for (size_t j = 0; j < new_len; ++j) {
      double pos = (double(j) + 0.5) * ratio - 0.5;
      double f = std::floor(pos);
      double w = pos - f;
      long i0 = (long(f) % long(old_len) + long(old_len)) % long(old_len);
      long i1 = (i0 + 1) % long(old_len);
      dst[i0] += (1.0 - w) * g[j];
      dst[i1] += w * g[j];
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------

Tensor batch_channel_norm(const Tensor& x, const Tensor& gain,
                          const Tensor& bias, NormStats& running, bool train,
                          double momentum, double eps, BcnCache* cache,
                          bool update_running) {
  if (x.ndim() < 2) throw DimensionError("batch_channel_norm: need [C,...]");
  size_t C = x.dim(0);
  size_t L = x.size() / C;
  if (gain.size() != C || bias.size() != C)
    throw DimensionError("batch_channel_norm: gain/bias must be [C]");
  if (running.mean.size() != C || running.var.size() != C)
    throw DimensionError("batch_channel_norm: running stats must be [C]");

  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(C);
  Tensor bmean({C}), bvar({C});
  for (size_t c = 0; c < C; ++c) {
    const double* xc = x.ptr() + c * L;
    double mu, var;
    if (train) {
      mu = 0;
      for (size_t i = 0; i < L; ++i) mu += xc[i];
      mu /= double(L);
      var = 0;
      for (size_t i = 0; i < L; ++i) var += (xc[i] - mu) * (xc[i] - mu);
      var /= double(L);
      bmean[c] = mu;
      bvar[c] = var;
    } else {
      mu = running.mean[c];
      var = running.var[c];
    }
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std[c] = inv;
    double* xh = xhat.ptr() + c * L;
    double* yc = y.ptr() + c * L;
    for (size_t i = 0; i < L; ++i) {
      xh[i] = (xc[i] - mu) * inv;
      yc[i] = xh[i] * gain[c] + bias[c];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->train = train;
    if (train) {
      cache->batch_mean = bmean;
      cache->batch_var = bvar;
    }
  }
  if (train && update_running) {
    for (size_t c = 0; c < C; ++c) {
      running.mean[c] = (1.0 - momentum) * running.mean[c] + momentum * bmean[c];
      running.var[c] = (1.0 - momentum) * running.var[c] + momentum * bvar[c];
    }
  }
  return y;
}

void batch_channel_norm_backward(const BcnCache& cache, const Tensor& gain,
                                 const Tensor& dy, Tensor& dx, Tensor& dgain,
                                 Tensor& dbias) {
  const Tensor& xhat = cache.xhat;
  require_same_shape(xhat, dy, "batch_channel_norm_backward");
  size_t C = xhat.dim(0);
  size_t L = xhat.size() / C;
  dx = Tensor(xhat.shape());
  dgain = Tensor({C});
  dbias = Tensor({C});
  for (size_t c = 0; c < C; ++c) {
    const double* xh = xhat.ptr() + c * L;
    const double* dyc = dy.ptr() + c * L;
    double* dxc = dx.ptr() + c * L;
    double sum_dy = 0, sum_dy_xh = 0;
    for (size_t i = 0; i < L; ++i) {
      sum_dy += dyc[i];
      sum_dy_xh += dyc[i] * xh[i];
    }
    dgain[c] = sum_dy_xh;
    dbias[c] = sum_dy;
    double g = gain[c] * cache.inv_std[c];
    if (cache.train) {
      for (size_t i = 0; i < L; ++i)
        dxc[i] = g * (dyc[i] - sum_dy / double(L) -
                      xh[i] * sum_dy_xh / double(L));
    } else {
      for (size_t i = 0; i < L; ++i) dxc[i] = g * dyc[i];
    }
  }
}

void fold_running_stats(NormStats& running, const BcnCache& cache,
                        double momentum) {
  if (!cache.train) return;
  size_t C = running.mean.size();
  for (size_t c = 0; c < C; ++c) {
    running.mean[c] =
        (1.0 - momentum) * running.mean[c] + momentum * cache.batch_mean[c];
    running.var[c] =
        (1.0 - momentum) * running.var[c] + momentum * cache.batch_var[c];
  }
}

}  // namespace panokit
