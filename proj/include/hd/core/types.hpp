#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>

#include "hd/core/tensor.hpp"

namespace hd {

// Depth range shared by the sigma<->depth mapping, rendering, and metrics.
inline constexpr double kDepthMin = 0.1;
inline constexpr double kDepthMax = 100.0;

// Pyramid reduction factors, finest first.
inline constexpr std::array<int, 4> kPyramidStrides = {4, 8, 16, 32};
inline constexpr int kPyramidLevels = 4;

enum class PyramidTag { GlobalSemantics, LocalDetails, Fused, Aligned };

inline const char* to_string(PyramidTag t) {
  switch (t) {
    case PyramidTag::GlobalSemantics: return "clip-like";
    case PyramidTag::LocalDetails: return "dino-like";
    case PyramidTag::Fused: return "fused";
    case PyramidTag::Aligned: return "aligned";
  }
  return "?";
}

// RGB image, channels-first {3,H,W}, values in [0,1].
template <class T>
struct ImageFrameT {
  Tensor<T> pixels;
  int frame_id = 0;
  int timestamp_index = 0;

  ImageFrameT() = default;
  ImageFrameT(Tensor<T> px, int id = 0, int t = 0)
      : pixels(std::move(px)), frame_id(id), timestamp_index(t) {
    validate();
  }

  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }

  void validate() const {
    if (pixels.rank() != 3 || pixels.dim(0) != 3)
      throw std::invalid_argument("ImageFrame: pixels must be {3,H,W}, got " + pixels.shape_str());
    const int H = pixels.dim(1), W = pixels.dim(2);
    if (H < 32 || W < 32 || H % 32 != 0 || W % 32 != 0)
      throw std::invalid_argument("ImageFrame: H and W must be >= 32 and divisible by 32, got " +
                                  std::to_string(H) + "x" + std::to_string(W));
    for (std::int64_t i = 0; i < pixels.numel(); ++i)
      if (!(pixels[i] >= T(0) && pixels[i] <= T(1)))
        throw std::invalid_argument("ImageFrame: pixel values must lie in [0,1]");
  }
};

// Four feature maps at strides 4/8/16/32 of the source image.
template <class T>
struct FeaturePyramidT {
  std::array<Tensor<T>, kPyramidLevels> levels;
  PyramidTag source_tag = PyramidTag::Fused;

  int channels(int level) const { return levels[static_cast<size_t>(level)].dim(0); }

  // Checks level shapes against the image extent they were computed from.
  void validate(int image_h, int image_w) const {
    for (int s = 0; s < kPyramidLevels; ++s) {
      const Tensor<T>& m = levels[static_cast<size_t>(s)];
      const int r = kPyramidStrides[static_cast<size_t>(s)];
      if (m.rank() != 3 || m.dim(1) != image_h / r || m.dim(2) != image_w / r)
        throw std::invalid_argument("FeaturePyramid: level " + std::to_string(s) + " shape " +
                                    m.shape_str() + " inconsistent with stride " +
                                    std::to_string(r) + " of " + std::to_string(image_h) + "x" +
                                    std::to_string(image_w));
      if (!m.all_finite())
        throw std::invalid_argument("FeaturePyramid: non-finite values at level " +
                                    std::to_string(s));
    }
  }
};

// Metric depth plus a per-pixel validity flag (false = no usable depth).
template <class T>
struct DepthMapT {
  Tensor<T> depth;          // {H,W}, meters
  Tensor<uint8_t> valid;    // {H,W}, 0 or 1

  DepthMapT() = default;
  DepthMapT(Tensor<T> d, Tensor<uint8_t> v) : depth(std::move(d)), valid(std::move(v)) {
    if (depth.rank() != 2 || valid.rank() != 2 || depth.dim(0) != valid.dim(0) ||
        depth.dim(1) != valid.dim(1))
      throw std::invalid_argument("DepthMap: depth and valid mask shapes must agree");
  }

  explicit DepthMapT(Tensor<T> d) : depth(std::move(d)) {
    valid = Tensor<uint8_t>(depth.shape(), uint8_t(1));
  }

  int height() const { return depth.dim(0); }
  int width() const { return depth.dim(1); }

  void check_range() const {
    for (std::int64_t i = 0; i < depth.numel(); ++i)
      if (valid[i] && !(depth[i] >= T(kDepthMin) && depth[i] <= T(kDepthMax)))
        throw std::invalid_argument("DepthMap: valid depth outside [" +
                                    std::to_string(kDepthMin) + "," + std::to_string(kDepthMax) +
                                    "]: " + std::to_string(static_cast<double>(depth[i])));
  }
};

// A training loss with its weighted breakdown. The scalar must re-derive from
// the components, so bookkeeping errors surface immediately instead of three
// modules later.
struct LossValue {
  double scalar = 0.0;
  std::map<std::string, double> components;  // already-weighted contributions

  void check() const {
    double s = 0.0;
    for (const auto& [k, v] : components) s += v;
    const double tol = 1e-6 * std::max(1.0, std::max(std::abs(s), std::abs(scalar)));
    if (std::abs(s - scalar) > tol)
      throw std::logic_error("LossValue: scalar " + std::to_string(scalar) +
                             " != sum of components " + std::to_string(s));
    if (scalar < 0.0) throw std::logic_error("LossValue: negative loss");
  }
};

using ImageFrame = ImageFrameT<float>;
using FeaturePyramid = FeaturePyramidT<float>;
using DepthMap = DepthMapT<float>;

}  // namespace hd
