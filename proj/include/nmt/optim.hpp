#pragma once

#include <functional>

#include "nmt/model.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

// In-place SGD update: param -= lr * grad, then the grad buffer is cleared.
// A parameter without a grad buffer is a state error.
void sgd_step(Tensor& param, double lr);

// Per-tensor Adam moments. step counts completed updates.
struct AdamState {
  Tensor m;
  Tensor v;
  std::size_t step = 0;

  static AdamState for_param(const Tensor& param);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update; clears the grad buffer like sgd_step.
void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg);

// Central-difference gradient check of a scalar-valued differentiable
// function of the parameter point. Returns the maximum over all parameter
// entries of |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
// The function must be deterministic (no dropout) for the comparison to
// make sense; h must be positive.
double finite_difference_check(const std::function<Tensor(ParameterSet&)>& f, ParameterSet& point,
                               double h);

}  // namespace nmt
