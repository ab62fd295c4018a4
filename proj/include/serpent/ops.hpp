// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Every op allocates a fresh output;
// reshapes and rearrangements copy.

#pragma once

#include <memory>
#include <vector>

#include "serpent/tensor.hpp"

namespace serpent::ops {

// Binary elementwise ops broadcast only when the smaller operand is a scalar
// or its shape equals the trailing dimensions of the larger operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float factor);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor exp(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// mean(|a - b|)
Tensor l1_loss(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., K] · weight[K, N] (+ bias[N]) -> [..., N]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

inline constexpr float kLayerNormEps = 1e-5f;
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = kLayerNormEps);

// x[H, W, C] cross-correlated per channel with kernels[k, k, C], zero padded
// to keep H and W. `bias` ([C]) may be undefined.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& kernels,
                        const Tensor& bias = Tensor());

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(const Tensor& a, const Tensor& b);

// Views `x` as rows of `row_size` contiguous values and builds an output of
// `shape` whose r-th row is input row index[r]. Backward scatter-adds.
Tensor gather_rows(const Tensor& x,
                   std::shared_ptr<const std::vector<int64_t>> index,
                   int64_t row_size, Shape shape);

}  // namespace serpent::ops
