// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "serpent/image.hpp"

namespace serpent {

inline constexpr double kPsnrCap = 100.0;  // dB, reported when MSE < 1e-10

double mse(const Image& a, const Image& b);
/// 10·log10(1 / MSE) with peak value 1.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int64_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean single-scale SSIM over all window positions fully inside the image,
/// averaged over channels. Throws when the image is smaller than the window.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

}  // namespace serpent
