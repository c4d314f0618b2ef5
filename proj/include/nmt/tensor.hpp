#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "nmt/errors.hpp"

namespace nmt {

struct Node;

// Dense row-major tensor of doubles. Copying a Tensor shares the underlying
// value/grad buffers (handle semantics); deep_copy() detaches. Tensors that
// take part in gradient computation carry a grad buffer of the same shape,
// allocated when the tensor is marked trainable or produced by an op while
// gradient recording is enabled. Rank is 1 or 2 everywhere in this library.
struct Tensor {
  std::vector<std::size_t> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

  std::size_t numel() const;
  std::size_t rank() const { return shape.size(); }
  // 2-D accessors; a rank-1 tensor behaves as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i) { return (*data)[i]; }
  double at(std::size_t i) const { return (*data)[i]; }
  double& at(std::size_t r, std::size_t c) { return (*data)[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return (*data)[r * cols() + c]; }
  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }
  double* grad_ptr() { return grad->data(); }

  bool defined() const { return static_cast<bool>(data); }
  double scalar() const;  // numel()==1 only
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  Tensor deep_copy() const;   // fresh buffers, no graph node
  void make_trainable();      // requires_grad = true, allocate zeroed grad
  void zero_grad();           // fill grad with zeros if present
};

// Graph node recorded by a differentiable op: the parent tensors plus a
// closure that pushes the output's grad into the parents' grads.
struct Node {
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backward;
};

// Gradient recording is on by default; NoGradGuard disables it for a scope
// (decoding, evaluation, finite differences).
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Reverse-mode accumulation from a scalar. Grad buffers of reachable
// trainable tensors are accumulated into (not overwritten), so separate
// loss terms may be run back-to-back before an optimizer step.
void backward(const Tensor& loss);

// Seeded deterministic random stream. Identical seeds give identical draw
// sequences for the life of the process.
struct RandomSource {
  std::uint64_t seed = 0;
  std::mt19937_64 engine;

  explicit RandomSource(std::uint64_t s = 0) : seed(s), engine(s) {}

  double uniform(double lo, double hi);
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n); n > 0
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
      std::swap(v[i], v[j]);
    }
  }
};

}  // namespace nmt
