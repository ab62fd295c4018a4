// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// 8-bit PNG input/output and small image utilities. Pixels are stored as
// interleaved H×W×C floats on the [0, 1] scale.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "serpent/tensor.hpp"

namespace serpent {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Image {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  std::vector<float> pixels;

  static Image blank(int64_t height, int64_t width, int64_t channels, float value = 0.0f);
  static Image from_tensor(const Tensor& t);
  Tensor to_tensor(bool requires_grad = false) const;

  bool empty() const { return pixels.empty(); }
  int64_t size() const { return height * width * channels; }
  float& at(int64_t y, int64_t x, int64_t c) { return pixels[static_cast<size_t>((y * width + x) * channels + c)]; }
  float at(int64_t y, int64_t x, int64_t c) const { return pixels[static_cast<size_t>((y * width + x) * channels + c)]; }
};

/// Decodes an 8-bit grayscale or RGB PNG (alpha is dropped). Grayscale is
/// expanded to `channels` copies when channels == 3.
Image read_png(const std::filesystem::path& path, int64_t channels = 3);
/// Writes 1- or 3-channel images, clamping to [0, 1] and rounding to 8 bits.
void write_png(const std::filesystem::path& path, const Image& img);

Image crop(const Image& img, int64_t top, int64_t left, int64_t height, int64_t width);
Image flip_horizontal(const Image& img);
/// Places images left to right; heights and channels must agree.
Image hstack(const std::vector<Image>& images);
/// Rounds every pixel to the nearest 8-bit level, as a PNG round trip would.
Image quantize8(const Image& img);

}  // namespace serpent
