#pragma once

#include <functional>
#include <string>
#include <vector>

#include "panokit/tensor.hpp"

namespace panokit {

// Central-difference gradient of a scalar function, component by component.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-5);

// ||a - b||_2 / max(||a||_2 + ||b||_2, floor). Zero when both are zero.
double grad_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-12);

struct GradCheckEntry {
  std::string op;
  double max_rel_err = 0.0;
};

// Checks every backward pass against central differences at reduced shapes:
// raw kernels (matmul, conv, padding, softmax, norms, resampling, strip
// pooling), the assembled modules (backbone, attention, encoder block, patch
// embedding, layout head — inputs and every registered parameter), and the
// losses. One entry per op, worst relative error across its tensors; all
// below 1e-4 on a healthy build. `corrupt` injects a deliberate error into
// one analytic gradient as a negative control.
std::vector<GradCheckEntry> run_gradient_suite(unsigned long seed,
                                               bool corrupt = false);

}  // namespace panokit
