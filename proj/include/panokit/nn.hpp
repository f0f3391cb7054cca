#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "panokit/ops.hpp"
#include "panokit/optim.hpp"
#include "panokit/rng.hpp"
#include "panokit/tensor.hpp"

namespace panokit {

// One learnable tensor. Backward passes accumulate into grad (+=), so a
// batch is a plain sample loop between zero_grads() and the optimizer step.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  AdamState adam;
};

// Owns every parameter of a model plus named pointers to non-learnable state
// (norm running stats). Registration order is stable and defines the weight
// container layout.
class ParamStore {
 public:
  Param& add(std::string name, Tensor init);
  // The tensor stays owned by the layer; the store only tracks it for
  // serialization.
  void register_buffer(std::string name, Tensor* tensor);

  const std::vector<std::unique_ptr<Param>>& params() const { return params_; }
  const std::vector<std::pair<std::string, Tensor*>>& buffers() const {
    return buffers_;
  }
  Param* find(std::string_view name) const;

  void zero_grads();
  size_t parameter_count() const;  // total scalars across params

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::vector<std::pair<std::string, Tensor*>> buffers_;
};

// Adam over every parameter in registration order.
void apply_adam(ParamStore& store, const AdamConfig& cfg);

// y = x w + b for x [n, in], w [in, out].
struct Linear {
  Param* w = nullptr;
  Param* b = nullptr;  // null when constructed without bias

  Linear(ParamStore& store, const std::string& prefix, size_t in, size_t out,
         bool bias, Rng& rng, double init_std = 0.02);
  Tensor forward(const Tensor& x) const;
  // Accumulates weight grads; returns dx.
  Tensor backward(const Tensor& input, const Tensor& dy) const;
};

struct Conv2d {
  Param* w = nullptr;  // [out_ch, in_ch, kh, kw]
  Param* b = nullptr;
  ConvSpec spec;

  Conv2d(ParamStore& store, const std::string& prefix, size_t in_ch,
         size_t out_ch, size_t kh, size_t kw, ConvSpec spec, bool bias,
         Rng& rng, double init_std = 0.02);
  Tensor forward(const Tensor& x) const;
  // Accumulates weight grads; fills *dx when non-null.
  void backward(const Tensor& input, const Tensor& dy, Tensor* dx) const;
};

// Per-channel normalization with running statistics for eval mode.
struct BatchChannelNorm {
  Param* gain = nullptr;
  Param* bias = nullptr;
  // Heap-held so the buffer pointers registered with the store stay valid
  // when the norm (or a layer holding it) is moved after construction.
  std::unique_ptr<NormStats> running;
  double momentum = 0.1;

  BatchChannelNorm(ParamStore& store, const std::string& prefix,
                   size_t channels);
  Tensor forward(const Tensor& x, bool train, BcnCache* cache,
                 bool update_running = true);
  Tensor backward(const BcnCache& cache, const Tensor& dy) const;
  // Deferred running-stat update for caches produced with
  // update_running=false, applied in a caller-chosen order.
  void fold(const BcnCache& cache) {
    fold_running_stats(*running, cache, momentum);
  }
};

struct LayerNorm {
  Param* gain = nullptr;
  Param* bias = nullptr;

  LayerNorm(ParamStore& store, const std::string& prefix, size_t dim);
  Tensor forward(const Tensor& x, LayerNormCache* cache) const;
  Tensor backward(const LayerNormCache& cache, const Tensor& dy) const;
};

}  // namespace panokit
