#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hd {

// Dense row-major tensor. Feature maps are stored channels-first {C,H,W},
// matrices {rows,cols}, vectors {n}, scalars {1}.
template <class T>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), T(0));
  }

  Tensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
    data_.assign(count(shape_), fill);
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != count(shape_))
      throw std::invalid_argument("tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, T v) { return Tensor(std::move(shape), v); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2d/3d/4d indexing; bounds enforced only by assert in hot paths.
  T& at(int i, int j) {
    assert(rank() == 2);
    return data_[static_cast<size_t>(i) * shape_[1] + j];
  }
  const T& at(int i, int j) const {
    assert(rank() == 2);
    return data_[static_cast<size_t>(i) * shape_[1] + j];
  }
  T& at(int c, int y, int x) {
    assert(rank() == 3);
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(int c, int y, int x) const {
    assert(rank() == 3);
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  T& at(int o, int c, int y, int x) {
    assert(rank() == 4);
    return data_[((static_cast<size_t>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  const T& at(int o, int c, int y, int x) const {
    assert(rank() == 4);
    return data_[((static_cast<size_t>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != numel())
      throw std::invalid_argument("tensor: reshape changes element count (" +
                                  shape_str() + " -> " + shape_string(shape) + ")");
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

  std::string shape_str() const { return shape_string(shape_); }

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "}";
    return os.str();
  }

  static std::int64_t count(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return s.empty() ? 0 : n;
  }

private:
  template <class U>
  friend class Tensor;

  std::vector<int> shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace hd
