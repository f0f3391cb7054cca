#pragma once

#include "panokit/tensor.hpp"

namespace panokit {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m, v;
  long t = 0;
};

// One bias-corrected Adam update, in place. State is lazily sized to the
// parameter shape on first use; t increments once per call.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
               const AdamConfig& cfg);

}  // namespace panokit
