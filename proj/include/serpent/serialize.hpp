// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0
//
// Named tensor tables on disk.
//
// Layout, all integers little-endian:
//
//   magic      8 bytes   "SRPTTBL1"
//   meta_len   u32       length of the metadata block
//   meta       bytes     free-form UTF-8 text (key=value lines by convention)
//   count      u32       number of tensor records
//   record * count:
//     name_len u32, name bytes
//     dtype    u8        1 = float32
//     rank     u32
//     extents  u64 * rank
//     payload  f32 * product(extents), little-endian IEEE-754

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "serpent/tensor.hpp"

namespace serpent {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct TensorTable {
  std::string metadata;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

inline constexpr char kTensorTableMagic[8] = {'S', 'R', 'P', 'T', 'T', 'B', 'L', '1'};
inline constexpr uint8_t kDtypeFloat32 = 1;

void write_tensor_table(std::ostream& os, const TensorTable& table);
TensorTable read_tensor_table(std::istream& is);

void save_tensor_table(const std::string& path, const TensorTable& table);
TensorTable load_tensor_table(const std::string& path);

}  // namespace serpent
