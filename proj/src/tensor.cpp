#include "nmt/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace nmt {

namespace {
std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

thread_local bool g_grad_enabled = true;
}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(shape_numel(t.shape), 0.0);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : *t.data) v = value;
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size())
    throw DimensionError("tensor: value count does not match shape");
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

std::size_t Tensor::numel() const { return data ? data->size() : 0; }

std::size_t Tensor::rows() const {
  if (shape.empty()) throw DimensionError("tensor: rows() on empty tensor");
  return shape.size() >= 2 ? shape[0] : 1;
}

std::size_t Tensor::cols() const {
  if (shape.empty()) throw DimensionError("tensor: cols() on empty tensor");
  return shape.size() >= 2 ? shape[1] : shape[0];
}

double Tensor::scalar() const {
  if (numel() != 1) throw DimensionError("tensor: scalar() on non-scalar");
  return (*data)[0];
}

bool Tensor::all_finite() const {
  for (double v : *data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::deep_copy() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(*data);
  if (requires_grad) {
    t.requires_grad = true;
    t.grad = std::make_shared<std::vector<double>>(data->size(), 0.0);
  }
  return t;
}

void Tensor::make_trainable() {
  requires_grad = true;
  if (!grad) grad = std::make_shared<std::vector<double>>(data->size(), 0.0);
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw DimensionError("backward: loss must be a scalar");
  if (!loss.requires_grad || !loss.grad)
    throw StateError("backward: loss does not carry a gradient");

  // Iterative DFS producing a post-order over graph nodes; parents end up
  // before their consumers, so the reversed list runs consumers first.
  std::vector<Tensor> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Tensor t;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  if (loss.node && seen.insert(loss.node.get()).second) stack.push_back({loss, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.t.node->parents.size()) {
      Tensor p = f.t.node->parents[f.next++];
      if (p.node && seen.insert(p.node.get()).second) stack.push_back({std::move(p), 0});
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  (*loss.grad)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (it->node->backward) it->node->backward(*it);
  }
}

double RandomSource::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine);
}

std::uint64_t RandomSource::uniform_int(std::uint64_t n) {
  if (n == 0) throw ConfigError("random: uniform_int needs n > 0");
  std::uniform_int_distribution<std::uint64_t> dist(0, n - 1);
  return dist(engine);
}

bool RandomSource::bernoulli(double p) {
  if (p < 0.0 || p > 1.0) throw ConfigError("random: bernoulli probability outside [0, 1]");
  return uniform(0.0, 1.0) < p;
}

}  // namespace nmt
