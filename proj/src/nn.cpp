// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/nn.hpp"

#include <cmath>

#include "serpent/ops.hpp"

namespace serpent::nn {

Tensor uniform(Shape shape, float bound, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
  for (float& x : v) x = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

int64_t count(const ParamList& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Linear Linear::create(int64_t in, int64_t out, std::mt19937_64& rng, bool zero_init) {
  Linear l;
  if (zero_init) {
    l.weight = Tensor::zeros({in, out}, true);
  } else {
    l.weight = uniform({in, out}, 1.0f / std::sqrt(static_cast<float>(in)), rng);
  }
  l.bias = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::parameters(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::create(int64_t channels) {
  return {Tensor::full({channels}, 1.0f, true), Tensor::zeros({channels}, true)};
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ops::layer_norm(x, gamma, beta);
}

void LayerNorm::parameters(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

DepthwiseConv2d DepthwiseConv2d::create(int64_t channels, int64_t kernel_size,
                                        std::mt19937_64& rng) {
  const float bound = 1.0f / static_cast<float>(kernel_size);
  return {uniform({kernel_size, kernel_size, channels}, bound, rng),
          Tensor::zeros({channels}, true)};
}

Tensor DepthwiseConv2d::operator()(const Tensor& x) const {
  return ops::depthwise_conv2d(x, kernels, bias);
}

void DepthwiseConv2d::parameters(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".kernels", kernels});
  out.push_back({prefix + ".bias", bias});
}

}  // namespace serpent::nn
