// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian blur + additive Gaussian noise, the degradation the restoration
// network learns to undo.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "serpent/image.hpp"

namespace serpent {

class DegradationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DegradationSpec {
  int64_t kernel_size = 9;   // pixels, odd
  double blur_sigma = 0.0;   // pixels; 0 selects kernel_size / 6
  double noise_sigma = 0.05; // on the [0, 1] intensity scale
  uint64_t seed = 0;
  bool clamp = true;         // false keeps out-of-range values (ablation only)

  void validate() const;
  double effective_sigma() const {
    return blur_sigma > 0.0 ? blur_sigma : static_cast<double>(kernel_size) / 6.0;
  }
};

/// Mixes a base seed with a list of indices (splitmix64 finaliser per step).
/// Results depend only on the values, never on call order.
uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> indices);

/// Normalised isotropic Gaussian, row-major size×size. Throws on even or
/// non-positive size and on sigma <= 0.
std::vector<double> gaussian_kernel(int64_t size, double sigma);

/// Per-channel convolution with reflect padding (edge pixel not repeated).
Image blur(const Image& img, const std::vector<double>& kernel, int64_t size);

/// Blur with `spec`'s kernel, then add N(0, noise_sigma²) drawn from a
/// generator seeded with `seed`, then clamp unless spec.clamp is false.
Image degrade(const Image& img, const DegradationSpec& spec, uint64_t seed);

/// Adds seeded N(0, sigma²) noise without blurring or clamping.
Image add_noise(const Image& img, double sigma, uint64_t seed);

}  // namespace serpent
