#pragma once

#include "hd/core/ops.hpp"
#include "hd/core/types.hpp"

// View-synthesis training objective: SSIM + L1 photometric term over the
// validity mask, edge-aware smoothness on mean-normalized disparity, and the
// weighted total.

namespace hd {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPhotometricBeta = 0.85;
inline constexpr double kSmoothnessWeight = 0.001;

// Per-pixel SSIM map, local statistics from 3x3 mean pooling with reflection.
template <class T>
Var<T> ssim(Var<T> x, Var<T> y) {
  if (!x.value().same_shape(y.value()))
    throw std::invalid_argument("ssim: shape mismatch " + x.value().shape_str() + " vs " +
                                y.value().shape_str());
  const T c1 = static_cast<T>(kSsimC1), c2 = static_cast<T>(kSsimC2);
  Var<T> mx = avg_pool3_reflect(x);
  Var<T> my = avg_pool3_reflect(y);
  Var<T> mxy = mul(mx, my);
  Var<T> sx = sub(avg_pool3_reflect(mul(x, x)), mul(mx, mx));
  Var<T> sy = sub(avg_pool3_reflect(mul(y, y)), mul(my, my));
  Var<T> sxy = sub(avg_pool3_reflect(mul(x, y)), mxy);
  Var<T> num = mul(affine(mxy, T(2), c1), affine(sxy, T(2), c2));
  Var<T> den = mul(affine(add(mul(mx, mx), mul(my, my)), T(1), c1),
                   affine(add(sx, sy), T(1), c2));
  return div(num, den);
}

// Mean over valid pixels of beta/2 (1 - SSIM) + (1 - beta) |target - recon|,
// both terms averaged over channels first. Scalar output.
template <class T>
Var<T> photometric_loss(Var<T> target, Var<T> recon, const Tensor<uint8_t>& mask,
                        double beta = kPhotometricBeta) {
  const Tensor<T>& tv = target.value();
  if (!tv.same_shape(recon.value()))
    throw std::invalid_argument("photometric_loss: shape mismatch");
  const int C = tv.dim(0), H = tv.dim(1), W = tv.dim(2);
  if (mask.rank() != 2 || mask.dim(0) != H || mask.dim(1) != W)
    throw std::invalid_argument("photometric_loss: mask shape mismatch");
  std::int64_t n_valid = 0;
  for (std::int64_t i = 0; i < mask.numel(); ++i) n_valid += mask[i] ? 1 : 0;
  if (n_valid == 0) throw std::invalid_argument("photometric_loss: empty validity mask");

  // weights: mask / (C * n_valid), broadcast over channels
  Tensor<T> w({C, H, W});
  const T unit = static_cast<T>(1.0 / (static_cast<double>(C) * static_cast<double>(n_valid)));
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) w.at(c, y, x) = mask.at(y, x) ? unit : T(0);

  Var<T> dssim = affine(ssim(target, recon), static_cast<T>(-beta / 2.0),
                        static_cast<T>(beta / 2.0));
  Var<T> l1 = scale(abs_v(sub(target, recon)), static_cast<T>(1.0 - beta));
  return weighted_sum(add(dssim, l1), w);
}

// Edge-aware first-order smoothness on disparity normalized by its mean.
// disparity {H,W}; image {C,H,W} supplies the edge weights (constant).
template <class T>
Var<T> smoothness_loss(Var<T> disparity, const Tensor<T>& image) {
  const Tensor<T>& dv = disparity.value();
  if (dv.rank() != 2) throw std::invalid_argument("smoothness_loss: disparity must be {H,W}");
  const int H = dv.dim(0), W = dv.dim(1);
  if (image.rank() != 3 || image.dim(1) != H || image.dim(2) != W)
    throw std::invalid_argument("smoothness_loss: image shape mismatch");
  const int C = image.dim(0);

  double mean_abs = 0.0;
  for (std::int64_t i = 0; i < dv.numel(); ++i) mean_abs += std::abs(static_cast<double>(dv[i]));
  if (mean_abs / static_cast<double>(dv.numel()) < 1e-8)
    throw std::invalid_argument("smoothness_loss: degenerate disparity (zero mean)");

  // edge weights exp(-|dI|), image gradients averaged over channels
  Tensor<T> wx({1, H, W - 1}), wy({1, H - 1, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x + 1 < W; ++x) {
      double gsum = 0.0;
      for (int c = 0; c < C; ++c)
        gsum += std::abs(static_cast<double>(image.at(c, y, x + 1)) -
                         static_cast<double>(image.at(c, y, x)));
      wx.at(0, y, x) = static_cast<T>(std::exp(-gsum / C));
    }
  for (int y = 0; y + 1 < H; ++y)
    for (int x = 0; x < W; ++x) {
      double gsum = 0.0;
      for (int c = 0; c < C; ++c)
        gsum += std::abs(static_cast<double>(image.at(c, y + 1, x)) -
                         static_cast<double>(image.at(c, y, x)));
      wy.at(0, y, x) = static_cast<T>(std::exp(-gsum / C));
    }

  Var<T> dn = div_bscalar(disparity, mean(disparity));  // d* = d / mean(d)
  Var<T> d3 = reshape(dn, {1, H, W});
  Var<T> gx = abs_v(sub(slice3(d3, 0, 1, 0, H, 1, W), slice3(d3, 0, 1, 0, H, 0, W - 1)));
  Var<T> gy = abs_v(sub(slice3(d3, 0, 1, 1, H, 0, W), slice3(d3, 0, 1, 0, H - 1, 0, W)));
  return add(mean(mul_const(gx, wx)), mean(mul_const(gy, wy)));
}

template <class T>
Var<T> total_loss(Var<T> l_pe, Var<T> l_smooth) {
  if (!l_pe.value().all_finite() || !l_smooth.value().all_finite())
    throw std::invalid_argument("total_loss: non-finite inputs");
  return add(l_pe, scale(l_smooth, static_cast<T>(kSmoothnessWeight)));
}

inline LossValue make_total_loss_value(double l_pe, double l_smooth) {
  LossValue lv;
  lv.components["photometric"] = l_pe;
  lv.components["smoothness"] = kSmoothnessWeight * l_smooth;
  lv.scalar = l_pe + kSmoothnessWeight * l_smooth;
  lv.check();
  return lv;
}

}  // namespace hd
