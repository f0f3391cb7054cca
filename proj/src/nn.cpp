#include "panokit/nn.hpp"

#include "panokit/error.hpp"

namespace panokit {

Param& ParamStore::add(std::string name, Tensor init) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->grad = Tensor(init.shape());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

void ParamStore::register_buffer(std::string name, Tensor* tensor) {
  for (const auto& [n, t] : buffers_) {
    if (n == name) throw ConfigError("duplicate buffer name: " + name);
  }
  buffers_.emplace_back(std::move(name), tensor);
}

Param* ParamStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->grad.zero();
}

size_t ParamStore::parameter_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void apply_adam(ParamStore& store, const AdamConfig& cfg) {
  for (const auto& p : store.params()) {
    adam_step(p->value, p->grad, p->adam, cfg);
  }
}

Linear::Linear(ParamStore& store, const std::string& prefix, size_t in,
               size_t out, bool bias, Rng& rng, double init_std) {
  w = &store.add(prefix + ".w", Tensor::gaussian({in, out}, rng, init_std));
  if (bias) b = &store.add(prefix + ".b", Tensor({out}));
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, w->value);
  if (b) {
    const size_t n = y.dim(0), out = y.dim(1);
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < out; ++j) y.at(i, j) += b->value[j];
    }
  }
  return y;
}

Tensor Linear::backward(const Tensor& input, const Tensor& dy) const {
  Tensor dx(input.shape());
  Tensor dw(w->value.shape());
  matmul_backward(input, w->value, dy, dx, dw);
  w->grad.add_scaled(dw, 1.0);
  if (b) {
    const size_t n = dy.dim(0), out = dy.dim(1);
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < out; ++j) b->grad[j] += dy.at(i, j);
    }
  }
  return dx;
}

Conv2d::Conv2d(ParamStore& store, const std::string& prefix, size_t in_ch,
               size_t out_ch, size_t kh, size_t kw, ConvSpec spec_, bool bias,
               Rng& rng, double init_std)
    : spec(spec_) {
  w = &store.add(prefix + ".w",
                 Tensor::gaussian({out_ch, in_ch, kh, kw}, rng, init_std));
  if (bias) b = &store.add(prefix + ".b", Tensor({out_ch}));
}

Tensor Conv2d::forward(const Tensor& x) const {
  return conv2d(x, w->value, b ? b->value : Tensor(), spec);
}

void Conv2d::backward(const Tensor& input, const Tensor& dy, Tensor* dx) const {
  Tensor dw(w->value.shape());
  Tensor db = b ? Tensor(b->value.shape()) : Tensor();
  conv2d_backward(input, w->value, spec, dy, dx, &dw, b ? &db : nullptr);
  w->grad.add_scaled(dw, 1.0);
  if (b) b->grad.add_scaled(db, 1.0);
}

BatchChannelNorm::BatchChannelNorm(ParamStore& store, const std::string& prefix,
                                   size_t channels)
    : running(std::make_unique<NormStats>(channels)) {
  gain = &store.add(prefix + ".gain", Tensor::full({channels}, 1.0));
  bias = &store.add(prefix + ".bias", Tensor({channels}));
  store.register_buffer(prefix + ".running_mean", &running->mean);
  store.register_buffer(prefix + ".running_var", &running->var);
}

Tensor BatchChannelNorm::forward(const Tensor& x, bool train, BcnCache* cache,
                                 bool update_running) {
  return batch_channel_norm(x, gain->value, bias->value, *running, train,
                            momentum, 1e-5, cache, update_running);
}

Tensor BatchChannelNorm::backward(const BcnCache& cache, const Tensor& dy) const {
  Tensor dx(dy.shape());
  Tensor dgain(gain->value.shape());
  Tensor dbias(bias->value.shape());
  batch_channel_norm_backward(cache, gain->value, dy, dx, dgain, dbias);
  gain->grad.add_scaled(dgain, 1.0);
  bias->grad.add_scaled(dbias, 1.0);
  return dx;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& prefix, size_t dim) {
  gain = &store.add(prefix + ".gain", Tensor::full({dim}, 1.0));
  bias = &store.add(prefix + ".bias", Tensor({dim}));
}

Tensor LayerNorm::forward(const Tensor& x, LayerNormCache* cache) const {
  return layer_norm(x, gain->value, bias->value, 1e-5, cache);
}

Tensor LayerNorm::backward(const LayerNormCache& cache, const Tensor& dy) const {
  Tensor dx(dy.shape());
  Tensor dgain(gain->value.shape());
  Tensor dbias(bias->value.shape());
  layer_norm_backward(cache, gain->value, dy, dx, dgain, dbias);
  gain->grad.add_scaled(dgain, 1.0);
  bias->grad.add_scaled(dbias, 1.0);
  return dx;
}

}  // namespace panokit
