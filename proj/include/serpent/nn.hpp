// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "serpent/serialize.hpp"
#include "serpent/tensor.hpp"

namespace serpent::nn {

// Parameter handles share storage with the owning module.
using ParamList = std::vector<NamedTensor>;

/// Uniform(-bound, bound) tensor.
Tensor uniform(Shape shape, float bound, std::mt19937_64& rng,
               bool requires_grad = true);

int64_t count(const ParamList& params);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  /// Weights uniform in ±1/sqrt(in), bias zero; all zero if `zero_init`.
  static Linear create(int64_t in, int64_t out, std::mt19937_64& rng,
                       bool zero_init = false);
  Tensor operator()(const Tensor& x) const;
  int64_t in_features() const { return weight.dim(0); }
  int64_t out_features() const { return weight.dim(1); }
  void parameters(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  static LayerNorm create(int64_t channels);
  Tensor operator()(const Tensor& x) const;
  void parameters(const std::string& prefix, ParamList& out) const;
};

struct DepthwiseConv2d {
  Tensor kernels;  // [k, k, C]
  Tensor bias;     // [C]

  static DepthwiseConv2d create(int64_t channels, int64_t kernel_size,
                                std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void parameters(const std::string& prefix, ParamList& out) const;
};

}  // namespace serpent::nn
