// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/metrics.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "serpent/degrade.hpp"

namespace serpent {

namespace {

void check_same(const Image& a, const Image& b, const char* what) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                         std::to_string(b.channels));
  }
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_same(a, b, "mse");
  if (a.pixels.empty()) throw DimensionError("mse: empty image");
  double acc = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(m));
}

double ssim(const Image& a, const Image& b, const SsimOptions& options) {
  check_same(a, b, "ssim");
  const int64_t win = options.window;
  if (a.height < win || a.width < win) {
    throw DimensionError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " is smaller than the " + std::to_string(win) + "x" + std::to_string(win) +
                         " window");
  }
  const std::vector<double> w = gaussian_kernel(win, options.sigma);
  const double c1 = options.k1 * options.k1;
  const double c2 = options.k2 * options.k2;
  const int64_t oh = a.height - win + 1, ow = a.width - win + 1;
  double total = 0.0;
  for (int64_t c = 0; c < a.channels; ++c) {
    double channel_sum = 0.0;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int64_t i = 0; i < win; ++i) {
          for (int64_t j = 0; j < win; ++j) {
            const double k = w[static_cast<size_t>(i * win + j)];
            const double u = a.at(y + i, x + j, c);
            const double v = b.at(y + i, x + j, c);
            mx += k * u;
            my += k * v;
            sxx += k * u * u;
            syy += k * v * v;
            sxy += k * u * v;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        channel_sum += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
    total += channel_sum / static_cast<double>(oh * ow);
  }
  return total / static_cast<double>(a.channels);
}

}  // namespace serpent
