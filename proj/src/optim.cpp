#include "panokit/optim.hpp"

#include <cmath>

#include "panokit/error.hpp"

namespace panokit {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               const AdamConfig& cfg) {
  require_same_shape(param, grad, "adam_step");
  if (state.t == 0) {
    state.m = Tensor(param.shape());
    state.v = Tensor(param.shape());
  }
  require_same_shape(param, state.m, "adam_step: state");
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  double* p = param.ptr();
  const double* g = grad.ptr();
  double* m = state.m.ptr();
  double* v = state.v.ptr();
  for (size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace panokit
