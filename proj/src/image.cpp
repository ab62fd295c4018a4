// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace serpent {

Image Image::blank(int64_t height, int64_t width, int64_t channels, float value) {
  if (height < 0 || width < 0 || channels < 1) throw ImageError("invalid image dimensions");
  Image img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.assign(static_cast<size_t>(height * width * channels), value);
  return img;
}

Image Image::from_tensor(const Tensor& t) {
  if (t.rank() != 3) throw DimensionError("image tensor must be HxWxC, got " + shape_str(t.shape()));
  Image img;
  img.height = t.dim(0);
  img.width = t.dim(1);
  img.channels = t.dim(2);
  img.pixels.assign(t.data().begin(), t.data().end());
  return img;
}

Tensor Image::to_tensor(bool requires_grad) const {
  return Tensor::from_data({height, width, channels}, pixels, requires_grad);
}

Image read_png(const std::filesystem::path& path, int64_t channels) {
  if (channels != 1 && channels != 3) throw ImageError("read_png: channels must be 1 or 3");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw ImageError("cannot decode " + path.string() + ": " + png.message);
  }
  png.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw ImageError("cannot decode " + path.string() + ": " + msg);
  }
  Image img = Image::blank(png.height, png.width, channels);
  for (size_t i = 0; i < buffer.size(); ++i) img.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ImageError("write_png: channels must be 1 or 3");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(img.pixels.size());
  for (size_t i = 0; i < buffer.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    buffer[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw ImageError("cannot write " + path.string() + ": " + png.message);
  }
}

Image crop(const Image& img, int64_t top, int64_t left, int64_t height, int64_t width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > img.height ||
      left + width > img.width) {
    throw ImageError("crop " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                     std::to_string(top) + ", " + std::to_string(left) + ") outside " +
                     std::to_string(img.height) + "x" + std::to_string(img.width) + " image");
  }
  Image out = Image::blank(height, width, img.channels);
  const int64_t row = width * img.channels;
  for (int64_t y = 0; y < height; ++y) {
    const float* src = img.pixels.data() + ((top + y) * img.width + left) * img.channels;
    std::copy(src, src + row, out.pixels.begin() + y * row);
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out = Image::blank(img.height, img.width, img.channels);
  for (int64_t y = 0; y < img.height; ++y)
    for (int64_t x = 0; x < img.width; ++x)
      for (int64_t c = 0; c < img.channels; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

Image hstack(const std::vector<Image>& images) {
  if (images.empty()) throw ImageError("hstack of nothing");
  int64_t width = 0;
  for (const auto& im : images) {
    if (im.height != images[0].height || im.channels != images[0].channels) {
      throw ImageError("hstack: images differ in height or channels");
    }
    width += im.width;
  }
  Image out = Image::blank(images[0].height, width, images[0].channels);
  int64_t offset = 0;
  for (const auto& im : images) {
    for (int64_t y = 0; y < im.height; ++y)
      for (int64_t x = 0; x < im.width; ++x)
        for (int64_t c = 0; c < im.channels; ++c) out.at(y, offset + x, c) = im.at(y, x, c);
    offset += im.width;
  }
  return out;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (float& v : out.pixels) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  return out;
}

}  // namespace serpent
