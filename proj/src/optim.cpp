#include "nmt/optim.hpp"

#include <cmath>

namespace nmt {

void sgd_step(Tensor& param, double lr) {
  if (!param.defined()) throw StateError("sgd: undefined parameter");
  if (!param.grad) throw StateError("sgd: parameter has no gradient");
  double* p = param.ptr();
  const double* g = param.grad->data();
  for (std::size_t i = 0; i < param.numel(); ++i) p[i] -= lr * g[i];
  param.zero_grad();
}

AdamState AdamState::for_param(const Tensor& param) {
  return {Tensor::zeros(param.shape), Tensor::zeros(param.shape), 0};
}

void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg) {
  if (!param.defined()) throw StateError("adam: undefined parameter");
  if (!param.grad) throw StateError("adam: parameter has no gradient");
  if (!state.m.same_shape(param) || !state.v.same_shape(param))
    throw DimensionError("adam: state shape does not match parameter");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  double* p = param.ptr();
  double* m = state.m.ptr();
  double* v = state.v.ptr();
  const double* g = param.grad->data();
  for (std::size_t i = 0; i < param.numel(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  param.zero_grad();
}

double finite_difference_check(const std::function<Tensor(ParameterSet&)>& f, ParameterSet& point,
                               double h) {
  if (h <= 0.0) throw NumericError("gradient check: step size must be positive");

  for (auto& [name, t] : point.tensors) {
    t.make_trainable();
    t.zero_grad();
  }
  Tensor loss = f(point);
  if (!loss.all_finite()) throw NumericError("gradient check: non-finite loss");
  backward(loss);

  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, t] : point.tensors) analytic[name] = *t.grad;

  double worst = 0.0;
  NoGradGuard no_grad;
  for (auto& [name, t] : point.tensors) {
    const std::vector<double>& a = analytic[name];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.at(i);
      t.at(i) = orig + h;
      const double up = f(point).scalar();
      t.at(i) = orig - h;
      const double down = f(point).scalar();
      t.at(i) = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(a[i] - numeric) / (std::abs(a[i]) + std::abs(numeric) + 1e-12);
      worst = std::max(worst, rel);
    }
  }
  for (auto& [name, t] : point.tensors) t.zero_grad();
  return worst;
}

}  // namespace nmt
