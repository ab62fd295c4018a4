// Copyright (c) 2026, The Serpent Authors
// SPDX-License-Identifier: Apache-2.0

#include "serpent/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace serpent {

namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((static_cast<uint64_t>(value) >> (8 * i)) & 0xff);
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw FormatError("tensor table truncated");
  }
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

std::string get_bytes(std::istream& is, uint32_t n) {
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("tensor table truncated");
  return s;
}

}  // namespace

const Tensor* TensorTable::find(const std::string& name) const {
  for (const auto& nt : tensors) {
    if (nt.name == name) return &nt.tensor;
  }
  return nullptr;
}

void write_tensor_table(std::ostream& os, const TensorTable& table) {
  os.write(kTensorTableMagic, sizeof(kTensorTableMagic));
  put_le<uint32_t>(os, static_cast<uint32_t>(table.metadata.size()));
  os.write(table.metadata.data(), static_cast<std::streamsize>(table.metadata.size()));
  put_le<uint32_t>(os, static_cast<uint32_t>(table.tensors.size()));
  for (const auto& [name, t] : table.tensors) {
    put_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<uint8_t>(os, kDtypeFloat32);
    put_le<uint32_t>(os, static_cast<uint32_t>(t.rank()));
    for (int64_t e : t.shape()) put_le<uint64_t>(os, static_cast<uint64_t>(e));
    for (float v : t.data()) put_le<uint32_t>(os, std::bit_cast<uint32_t>(v));
  }
  if (!os) throw FormatError("failed writing tensor table");
}

TensorTable read_tensor_table(std::istream& is) {
  char magic[sizeof(kTensorTableMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kTensorTableMagic, sizeof(magic)) != 0) {
    throw FormatError("not a tensor table (bad magic)");
  }
  TensorTable table;
  table.metadata = get_bytes(is, get_le<uint32_t>(is));
  const uint32_t count = get_le<uint32_t>(is);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = get_bytes(is, get_le<uint32_t>(is));
    const uint8_t dtype = get_le<uint8_t>(is);
    if (dtype != kDtypeFloat32) {
      throw FormatError("tensor '" + nt.name + "' has unsupported dtype " +
                        std::to_string(dtype));
    }
    const uint32_t rank = get_le<uint32_t>(is);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<int64_t>(get_le<uint64_t>(is));
    std::vector<float> data(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : data) v = std::bit_cast<float>(get_le<uint32_t>(is));
    nt.tensor = Tensor::from_data(std::move(shape), std::move(data));
    table.tensors.push_back(std::move(nt));
  }
  return table;
}

void save_tensor_table(const std::string& path, const TensorTable& table) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  write_tensor_table(os, table);
}

TensorTable load_tensor_table(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open '" + path + "'");
  return read_tensor_table(is);
}

}  // namespace serpent
