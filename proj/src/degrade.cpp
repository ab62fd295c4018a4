// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace serpent {

namespace {

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Folds an out-of-range index back into [0, n) by mirroring about the edge
// pixels, repeating as often as needed for kernels wider than the image.
int64_t reflect(int64_t i, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

void DegradationSpec::validate() const {
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw DegradationError("degrade.kernel_size must be a positive odd integer, got " +
                           std::to_string(kernel_size));
  }
  if (!(blur_sigma >= 0.0) || !std::isfinite(blur_sigma)) {
    throw DegradationError("degrade.blur_sigma must be >= 0");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw DegradationError("degrade.noise_sigma must be >= 0");
  }
}

uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> indices) {
  uint64_t s = splitmix64(base);
  for (uint64_t i : indices) s = splitmix64(s ^ splitmix64(i + 0x632BE59BD9B4E019ull));
  return s;
}

std::vector<double> gaussian_kernel(int64_t size, double sigma) {
  if (size < 1 || size % 2 == 0) {
    throw DegradationError("gaussian kernel size must be a positive odd integer, got " +
                           std::to_string(size));
  }
  if (!(sigma > 0.0)) throw DegradationError("gaussian kernel sigma must be > 0");
  const int64_t r = size / 2;
  std::vector<double> k(static_cast<size_t>(size * size));
  double total = 0.0;
  for (int64_t y = -r; y <= r; ++y) {
    for (int64_t x = -r; x <= r; ++x) {
      const double v = std::exp(-static_cast<double>(x * x + y * y) / (2.0 * sigma * sigma));
      k[static_cast<size_t>((y + r) * size + (x + r))] = v;
      total += v;
    }
  }
  for (double& v : k) v /= total;
  return k;
}

Image blur(const Image& img, const std::vector<double>& kernel, int64_t size) {
  if (static_cast<int64_t>(kernel.size()) != size * size || size % 2 == 0) {
    throw DegradationError("blur: kernel must be an odd size×size array");
  }
  const int64_t r = size / 2;
  const int64_t H = img.height, W = img.width, C = img.channels;
  Image out = Image::blank(H, W, C);
  std::vector<double> acc(static_cast<size_t>(C));
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int64_t dy = -r; dy <= r; ++dy) {
        const int64_t sy = reflect(y + dy, H);
        for (int64_t dx = -r; dx <= r; ++dx) {
          const int64_t sx = reflect(x + dx, W);
          const double w = kernel[static_cast<size_t>((dy + r) * size + (dx + r))];
          const float* px = img.pixels.data() + (sy * W + sx) * C;
          for (int64_t c = 0; c < C; ++c) acc[static_cast<size_t>(c)] += w * px[c];
        }
      }
      for (int64_t c = 0; c < C; ++c) out.at(y, x, c) = static_cast<float>(acc[static_cast<size_t>(c)]);
    }
  }
  return out;
}

Image add_noise(const Image& img, double sigma, uint64_t seed) {
  Image out = img;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (float& v : out.pixels) v = static_cast<float>(v + noise(rng));
  return out;
}

Image degrade(const Image& img, const DegradationSpec& spec, uint64_t seed) {
  spec.validate();
  Image out = spec.kernel_size == 1
                  ? img
                  : blur(img, gaussian_kernel(spec.kernel_size, spec.effective_sigma()), spec.kernel_size);
  out = add_noise(out, spec.noise_sigma, seed);
  if (spec.clamp) {
    for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

}  // namespace serpent
