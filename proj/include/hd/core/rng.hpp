#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "hd/core/tensor.hpp"

namespace hd {

// Deterministic random stream addressed by (seed, stream_label).
// Draw functions are implemented on top of the raw engine output so the
// sequences are stable across standard libraries; identical (seed, label)
// reproduce identical draws, distinct labels decorrelate.
class RngState {
public:
  RngState() : RngState(0, "") {}

  RngState(std::uint64_t seed, std::string stream_label)
      : seed_(seed), label_(std::move(stream_label)) {
    state_ = splitmix(seed_ ^ fnv1a(label_));
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;  // xorshift state must be nonzero
    // warm up so nearby seeds diverge immediately
    for (int i = 0; i < 4; ++i) next_u64();
  }

  std::uint64_t seed() const { return seed_; }
  const std::string& stream_label() const { return label_; }

  std::uint64_t next_u64() {
    // xorshift* over a splitmix-initialized state
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive integer range
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // rejection sampling keeps the draw unbiased and deterministic
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return lo + static_cast<std::int64_t>(x % span);
  }

  // standard normal via Box-Muller, spare value cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // independent child stream for a sub-task
  RngState fork(const std::string& sub_label) const {
    return RngState(seed_, label_ + "/" + sub_label);
  }

  template <class T = double>
  Tensor<T> uniform_tensor(std::vector<int> shape, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    return t;
  }

  template <class T = double>
  Tensor<T> normal_tensor(std::vector<int> shape, double mean, double stddev) {
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(mean, stddev));
    return t;
  }

  static std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

private:
  std::uint64_t seed_ = 0;
  std::string label_;
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline RngState make_rng(std::uint64_t seed, const std::string& stream_label) {
  return RngState(seed, stream_label);
}

}  // namespace hd
