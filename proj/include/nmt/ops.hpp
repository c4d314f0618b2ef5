#pragma once

#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

// Differentiable operations over Tensor. All ops validate shapes up front and
// record a graph node when gradient recording is enabled and at least one
// input requires grad. Inputs are never mutated.

Tensor add(const Tensor& a, const Tensor& b);       // same shape
Tensor sub(const Tensor& a, const Tensor& b);       // same shape
Tensor add_row(const Tensor& x, const Tensor& b);   // [n,d] + [d], row broadcast
Tensor scale(const Tensor& x, double c);
Tensor relu(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T -> [m,n]

// Row-wise softmax with max subtraction; a rank-1 input is a single row.
Tensor softmax(const Tensor& x);

// Row-wise layer normalization with learned gain/bias of width cols(x).
// Variance is the population variance; eps keeps the denominator positive.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Gathers table rows for each id; grads scatter-add back into the table.
Tensor embedding(const std::vector<std::size_t>& ids, const Tensor& table);

Tensor slice_cols(const Tensor& x, std::size_t first, std::size_t width);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Inverted dropout: kept entries are scaled by 1/(1-rate) so eval needs no
// rescaling. Identity (same tensor, no rng draws) when train is false or
// rate is zero.
Tensor dropout(const Tensor& x, double rate, RandomSource& rng, bool train);

// Mean label-smoothed cross-entropy over rows of logits [n,V] against target
// ids. The smoothed target distribution puts (1-eps_ls) on the target class
// plus eps_ls spread uniformly over all V classes.
Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<std::size_t>& targets,
                                    double eps_ls);
// Single-distribution form of the same loss.
double cross_entropy_label_smoothed(const Tensor& logits_row, std::size_t target, double eps_ls);

// Group-lasso loss term: sum over deltas of sqrt(numel) * ||delta||_2.
// The backward pass guards the norm denominator with norm_floor.
Tensor group_lasso_term(const std::vector<Tensor>& deltas, double norm_floor);

}  // namespace nmt
