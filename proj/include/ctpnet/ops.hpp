#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ctpnet/tensor.hpp"

namespace ctpnet {

// Elementwise binary ops. `b` broadcasts into `a`'s shape: aligned from the
// right, each extent of b equals a's or is 1. The result has a's shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);

// Exact form x * Phi(x).
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// a: (..., m, k), b: (..., k, n). Leading axes broadcast numpy-style.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose_last_two(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, int axis);
// Joins equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
// Picks entries along `axis` (repeats allowed); backward scatter-adds.
Tensor index_select(const Tensor& x, int axis, std::span<const std::size_t> indices);

// Stable softmax over the last axis.
Tensor softmax_last(const Tensor& x);
// Normalizes each last-axis slice with population variance, then applies
// scale/shift (each of the last-axis extent).
Tensor layer_norm_last(const Tensor& x, const Tensor& scale, const Tensor& shift,
                       double eps = 1e-5);

}  // namespace ctpnet
