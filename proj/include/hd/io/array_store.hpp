#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hd/core/tensor.hpp"

// Named-array container: a flat binary file holding (name, dtype, dims, data)
// records plus one free-form metadata string. Used for encoder weight files
// and training checkpoints.
//
// Layout, all little-endian:
//   magic "HDTENSR1" | u32 array count | u32 meta length | meta bytes
//   per array: u32 name length | name | u8 dtype | u32 rank | i64 dims[rank]
//              | u64 payload bytes | payload

namespace hd {

static_assert(std::endian::native == std::endian::little,
              "array container assumes a little-endian host");

enum class ArrayDType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

inline const char* to_string(ArrayDType t) {
  switch (t) {
    case ArrayDType::F32: return "f32";
    case ArrayDType::F64: return "f64";
    case ArrayDType::U8: return "u8";
  }
  return "?";
}

inline std::size_t dtype_size(ArrayDType t) {
  return t == ArrayDType::F64 ? 8 : (t == ArrayDType::F32 ? 4 : 1);
}

namespace detail {
template <class T>
constexpr ArrayDType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return ArrayDType::F32;
  else if constexpr (std::is_same_v<T, double>) return ArrayDType::F64;
  else {
    static_assert(std::is_same_v<T, std::uint8_t>, "unsupported array dtype");
    return ArrayDType::U8;
  }
}
}  // namespace detail

struct NamedArray {
  std::string name;
  ArrayDType dtype = ArrayDType::F32;
  std::vector<int> dims;
  std::vector<unsigned char> bytes;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return n;
  }

  template <class T>
  static NamedArray from(std::string name, const Tensor<T>& t) {
    NamedArray a;
    a.name = std::move(name);
    a.dtype = detail::dtype_of<T>();
    a.dims = t.shape();
    a.bytes.resize(static_cast<std::size_t>(t.numel()) * sizeof(T));
    std::memcpy(a.bytes.data(), t.raw().data(), a.bytes.size());
    return a;
  }

  // Reads out as T, converting from the stored dtype.
  template <class T>
  Tensor<T> as() const {
    Tensor<T> out(dims);
    if (out.numel() != numel() ||
        bytes.size() != static_cast<std::size_t>(numel()) * dtype_size(dtype))
      throw std::runtime_error("array '" + name + "': payload size does not match dims");
    auto copy_from = [&](auto tag) {
      using S = decltype(tag);
      const S* src = reinterpret_cast<const S*>(bytes.data());
      for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(src[i]);
    };
    switch (dtype) {
      case ArrayDType::F32: copy_from(float{}); break;
      case ArrayDType::F64: copy_from(double{}); break;
      case ArrayDType::U8: copy_from(std::uint8_t{}); break;
    }
    return out;
  }
};

struct ArrayStore {
  std::vector<NamedArray> arrays;  // order preserved on disk
  std::string meta;                // free-form, conventionally JSON

  const NamedArray* find(const std::string& name) const {
    for (const NamedArray& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }

  const NamedArray& at(const std::string& name) const {
    const NamedArray* a = find(name);
    if (!a) throw std::runtime_error("array store has no entry named '" + name + "'");
    return *a;
  }

  void add(NamedArray a) {
    if (a.name.empty()) throw std::invalid_argument("array store: empty array name");
    if (find(a.name)) throw std::invalid_argument("array store: duplicate name '" + a.name + "'");
    arrays.push_back(std::move(a));
  }

  template <class T>
  void add(const std::string& name, const Tensor<T>& t) {
    add(NamedArray::from<T>(name, t));
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    auto put_u32 = [&](std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
    f.write("HDTENSR1", 8);
    put_u32(static_cast<std::uint32_t>(arrays.size()));
    put_u32(static_cast<std::uint32_t>(meta.size()));
    f.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    for (const NamedArray& a : arrays) {
      put_u32(static_cast<std::uint32_t>(a.name.size()));
      f.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
      const std::uint8_t dt = static_cast<std::uint8_t>(a.dtype);
      f.write(reinterpret_cast<const char*>(&dt), 1);
      put_u32(static_cast<std::uint32_t>(a.dims.size()));
      for (int d : a.dims) put_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(d)));
      put_u64(a.bytes.size());
      f.write(reinterpret_cast<const char*>(a.bytes.data()),
              static_cast<std::streamsize>(a.bytes.size()));
    }
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
  }

  static ArrayStore load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    auto fail = [&](const std::string& why) -> std::runtime_error {
      return std::runtime_error("'" + path + "': " + why);
    };
    auto get_u32 = [&]() {
      std::uint32_t v = 0;
      f.read(reinterpret_cast<char*>(&v), 4);
      return v;
    };
    auto get_u64 = [&]() {
      std::uint64_t v = 0;
      f.read(reinterpret_cast<char*>(&v), 8);
      return v;
    };
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "HDTENSR1", 8) != 0) throw fail("not an array container");
    const std::uint32_t count = get_u32();
    const std::uint32_t meta_len = get_u32();
    ArrayStore store;
    store.meta.resize(meta_len);
    f.read(store.meta.data(), meta_len);
    for (std::uint32_t i = 0; i < count && f; ++i) {
      NamedArray a;
      const std::uint32_t name_len = get_u32();
      if (name_len > 4096) throw fail("implausible name length");
      a.name.resize(name_len);
      f.read(a.name.data(), name_len);
      std::uint8_t dt = 255;
      f.read(reinterpret_cast<char*>(&dt), 1);
      if (dt > 2) throw fail("unknown dtype tag in '" + a.name + "'");
      a.dtype = static_cast<ArrayDType>(dt);
      const std::uint32_t rank = get_u32();
      if (rank > 8) throw fail("implausible rank in '" + a.name + "'");
      for (std::uint32_t r = 0; r < rank; ++r)
        a.dims.push_back(static_cast<int>(static_cast<std::int64_t>(get_u64())));
      const std::uint64_t payload = get_u64();
      if (payload != static_cast<std::uint64_t>(a.numel()) * dtype_size(a.dtype))
        throw fail("payload size mismatch in '" + a.name + "'");
      a.bytes.resize(payload);
      f.read(reinterpret_cast<char*>(a.bytes.data()), static_cast<std::streamsize>(payload));
      store.add(std::move(a));
    }
    if (!f) throw fail("truncated file");
    return store;
  }
};

}  // namespace hd
