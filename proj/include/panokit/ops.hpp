#pragma once

#include <string>
#include <vector>

#include "panokit/tensor.hpp"

namespace panokit {

namespace detail {
// Row-major kernels. c must not alias a or b.
void mm(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);      // c = a b
void mm_add(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);  // c += a b
void mm_at(const double* a, const double* b, double* c, size_t k, size_t m, size_t n);   // c = a^T b, a is k x m
void mm_bt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);   // c = a b^T, b is n x k
}  // namespace detail

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout,
                     Tensor& da, Tensor& db);

struct ConvSpec {
  size_t stride_h = 1, stride_w = 1;
  size_t pad_h = 0, pad_w = 0;  // zero padding
};

// input [C,H,W], kernels [K,C,kh,kw], bias [K] (or empty for none) -> [K,OH,OW]
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const ConvSpec& spec = {});
// Any of the gradient outputs may be null to skip.
void conv2d_backward(const Tensor& input, const Tensor& kernels,
                     const ConvSpec& spec, const Tensor& dout, Tensor* dinput,
                     Tensor* dkernels, Tensor* dbias);

// Panorama wrap: pad columns circularly, [C,H,W] -> [C,H,W+2p].
Tensor pad_wrap_x(const Tensor& input, size_t p);
// Folds gradient of the padded tensor back onto the original columns.
Tensor pad_wrap_x_backward(const Tensor& dpadded, size_t p);

// Softmax over the last axis. Max-subtracted for stability.
Tensor softmax(const Tensor& x);
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

// Normalizes over the last axis; gain/bias have that axis's length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5, LayerNormCache* cache = nullptr);
void layer_norm_backward(const LayerNormCache& cache, const Tensor& gain,
                         const Tensor& dy, Tensor& dx, Tensor& dgain,
                         Tensor& dbias);

enum class Act { Relu, Gelu, Sigmoid, Tanh };
Act activation_from_name(const std::string& name);
Tensor activation(const Tensor& x, Act act);
Tensor activation_backward(const Tensor& x, Act act, const Tensor& dy);

// 1D linear resample with endpoint alignment, per row of [C,L] (or flat [L]).
Tensor resize_linear(const Tensor& x, size_t new_len);
Tensor resize_linear_backward(size_t old_len, size_t new_len, const Tensor& dout);

// Circular resample at cell centers: source position (j+0.5)*L/new_len - 0.5
// wraps modulo L. Rolling the input by r columns rolls the output by
// r*new_len/L exactly when that ratio is integral.
Tensor resize_circular(const Tensor& x, size_t new_len);
Tensor resize_circular_backward(size_t old_len, size_t new_len, const Tensor& dout);

// Per-channel running statistics for batch_channel_norm.
struct NormStats {
  Tensor mean, var;  // [C]
  explicit NormStats(size_t channels = 0)
      : mean({channels}), var(Tensor::full({channels}, 1.0)) {}
};

struct BcnCache {
  Tensor xhat;
  std::vector<double> inv_std;   // per channel, of the stats used to normalize
  Tensor batch_mean, batch_var;  // only filled in train mode
  bool train = false;
};

// x is [C, ...spatial]; statistics are per channel over all spatial entries.
// Train mode normalizes by batch statistics and (when update_running is set)
// applies the running update m <- (1-momentum) m + momentum mu. Callers doing
// deferred updates pass update_running=false and fold caches in later.
Tensor batch_channel_norm(const Tensor& x, const Tensor& gain,
                          const Tensor& bias, NormStats& running, bool train,
                          double momentum = 0.1, double eps = 1e-5,
                          BcnCache* cache = nullptr, bool update_running = true);
void batch_channel_norm_backward(const BcnCache& cache, const Tensor& gain,
                                 const Tensor& dy, Tensor& dx, Tensor& dgain,
                                 Tensor& dbias);
void fold_running_stats(NormStats& running, const BcnCache& cache,
                        double momentum = 0.1);

}  // namespace panokit
