#pragma once

#include "hd/core/ops.hpp"
#include "hd/core/types.hpp"

namespace hd {

// Inverse-depth range map: sigma 0 is the far plane, 1 the near plane.
// depth = 1 / (1/d_max + (1/d_min - 1/d_max) * sigma)

template <class T>
Var<T> sigma_to_depth(Var<T> sigma) {
  const T k = static_cast<T>(1.0 / kDepthMin - 1.0 / kDepthMax);
  const T c = static_cast<T>(1.0 / kDepthMax);
  return reciprocal(affine(sigma, k, c));
}

template <class T>
DepthMapT<T> sigma_to_depth(const Tensor<T>& sigma) {
  if (sigma.rank() != 2)
    throw std::invalid_argument("sigma_to_depth: expected {H,W}, got " + sigma.shape_str());
  Tensor<T> depth(sigma.shape());
  for (std::int64_t i = 0; i < sigma.numel(); ++i) {
    const double s = static_cast<double>(sigma[i]);
    if (s < 0.0 || s > 1.0)
      throw std::invalid_argument("sigma_to_depth: sigma out of [0,1]: " + std::to_string(s));
    depth[i] = static_cast<T>(1.0 / (1.0 / kDepthMax + (1.0 / kDepthMin - 1.0 / kDepthMax) * s));
  }
  return DepthMapT<T>(std::move(depth));
}

template <class T>
Tensor<T> depth_to_sigma(const Tensor<T>& depth) {
  Tensor<T> sigma(depth.shape());
  for (std::int64_t i = 0; i < depth.numel(); ++i) {
    const double d = static_cast<double>(depth[i]);
    if (d <= 0.0) throw std::invalid_argument("depth_to_sigma: nonpositive depth");
    sigma[i] =
        static_cast<T>((1.0 / d - 1.0 / kDepthMax) / (1.0 / kDepthMin - 1.0 / kDepthMax));
  }
  return sigma;
}

}  // namespace hd
