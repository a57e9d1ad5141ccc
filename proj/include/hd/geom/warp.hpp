#pragma once

#include "hd/core/ops.hpp"
#include "hd/core/types.hpp"
#include "hd/geom/se3.hpp"

// View synthesis: every target pixel is backprojected with its depth, moved by
// the relative pose, projected into the source view, and bilinearly sampled.
// Pixels that land outside the source bounds (or behind the camera) are masked
// out of the loss, and no gradient flows through them; their sample values are
// still filled from edge-clamped coordinates when a projection exists.

namespace hd {

namespace detail {

template <class T>
struct WarpCache {
  Tensor<double> u, v;        // source-view pixel coords per target pixel
  Tensor<double> xs, ys, zs;  // source-camera coordinates
  Tensor<uint8_t> valid;      // full validity: in bounds and depth usable
  Tensor<uint8_t> sampleable; // projection computable at all (clamped coords)
};

// Shared forward pass. depth_valid may be empty (treated as all-valid).
template <class T>
WarpCache<T> warp_project(const Tensor<T>& depth, const Tensor<uint8_t>& depth_valid,
                          const Tensor<T>& rt, const CameraModel& cam) {
  const int H = depth.dim(0), W = depth.dim(1);
  WarpCache<T> c{Tensor<double>({H, W}), Tensor<double>({H, W}), Tensor<double>({H, W}),
                 Tensor<double>({H, W}), Tensor<double>({H, W}), Tensor<uint8_t>({H, W}),
                 Tensor<uint8_t>({H, W})};
  const double zmin = 1e-3;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double d = static_cast<double>(depth.at(y, x));
      // backproject to the target camera, then rigid-transform
      const double dirx = (x - cam.cx) / cam.fx;
      const double diry = (y - cam.cy) / cam.fy;
      const double X = d * dirx, Y = d * diry, Z = d;
      const double xs = rt.at(0, 0) * X + rt.at(0, 1) * Y + rt.at(0, 2) * Z + rt.at(0, 3);
      const double ys = rt.at(1, 0) * X + rt.at(1, 1) * Y + rt.at(1, 2) * Z + rt.at(1, 3);
      const double zs = rt.at(2, 0) * X + rt.at(2, 1) * Y + rt.at(2, 2) * Z + rt.at(2, 3);
      c.xs.at(y, x) = xs;
      c.ys.at(y, x) = ys;
      c.zs.at(y, x) = zs;
      const bool projectable = d > 0.0 && zs > zmin;
      bool ok = projectable;
      double u = 0.0, v = 0.0;
      if (projectable) {
        u = cam.fx * xs / zs + cam.cx;
        v = cam.fy * ys / zs + cam.cy;
        // tolerate rounding at the exact border, then clamp for sampling
        const double eps = 1e-6;
        ok = u >= -eps && u <= W - 1 + eps && v >= -eps && v <= H - 1 + eps;
        u = std::min(std::max(u, 0.0), static_cast<double>(W - 1));
        v = std::min(std::max(v, 0.0), static_cast<double>(H - 1));
      }
      if (!depth_valid.empty() && !depth_valid.at(y, x)) ok = false;
      c.u.at(y, x) = u;
      c.v.at(y, x) = v;
      c.valid.at(y, x) = ok ? 1 : 0;
      c.sampleable.at(y, x) = projectable ? 1 : 0;
    }
  return c;
}

template <class T>
Tensor<T> warp_sample(const Tensor<T>& src, const WarpCache<T>& c) {
  const int C = src.dim(0), H = src.dim(1), W = src.dim(2);
  Tensor<T> out({C, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      // fill masked pixels from clamped coordinates too: plausible content
      // there keeps windowed statistics of adjacent valid pixels honest
      if (!c.sampleable.at(y, x)) continue;
      const double u = c.u.at(y, x), v = c.v.at(y, x);
      const int x0 = std::min(static_cast<int>(std::floor(u)), W - 2 < 0 ? 0 : W - 2);
      const int y0 = std::min(static_cast<int>(std::floor(v)), H - 2 < 0 ? 0 : H - 2);
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fu = u - x0, fv = v - y0;
      for (int ch = 0; ch < C; ++ch) {
        const double v00 = src.at(ch, y0, x0), v01 = src.at(ch, y0, x1);
        const double v10 = src.at(ch, y1, x0), v11 = src.at(ch, y1, x1);
        out.at(ch, y, x) = static_cast<T>((1 - fv) * ((1 - fu) * v00 + fu * v01) +
                                          fv * ((1 - fu) * v10 + fu * v11));
      }
    }
  return out;
}

}  // namespace detail

// Plain evaluation path.
template <class T>
std::pair<Tensor<T>, Tensor<uint8_t>> reproject_warp(const Tensor<T>& source,
                                                     const DepthMapT<T>& depth,
                                                     const PoseSE3& pose,
                                                     const CameraModel& cam) {
  const TensorD M = pose_to_matrix(pose);
  Tensor<T> rt({3, 4});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) rt.at(i, j) = static_cast<T>(M.at(i, j));
  detail::WarpCache<T> c = detail::warp_project(depth.depth, depth.valid, rt, cam);
  return {detail::warp_sample(source, c), c.valid};
}

inline std::pair<ImageFrame, Tensor<uint8_t>> reproject_warp(const ImageFrame& source,
                                                             const DepthMap& depth,
                                                             const PoseSE3& pose,
                                                             const CameraModel& cam) {
  auto [px, mask] = reproject_warp<float>(source.pixels, depth, pose, cam);
  ImageFrame out;
  out.pixels = std::move(px);
  out.frame_id = source.frame_id;
  out.timestamp_index = source.timestamp_index;
  return {std::move(out), std::move(mask)};
}

// Graph path: src is a constant image; gradients flow into depth and rt.
// The validity mask is written to *mask_out (it is data, not a graph value).
template <class T>
Var<T> warp_image(const Tensor<T>& src, Var<T> depth, Var<T> rt, const CameraModel& cam,
                  const Tensor<uint8_t>& depth_valid, Tensor<uint8_t>* mask_out) {
  Graph<T>& g = *depth.graph();
  if (depth.value().rank() != 2) throw std::invalid_argument("warp_image: depth must be {H,W}");
  if (rt.value().rank() != 2 || rt.value().dim(0) != 3 || rt.value().dim(1) != 4)
    throw std::invalid_argument("warp_image: rt must be {3,4}");
  const int H = depth.value().dim(0), W = depth.value().dim(1);
  if (src.rank() != 3 || src.dim(1) != H || src.dim(2) != W)
    throw std::invalid_argument("warp_image: src shape " + src.shape_str() +
                                " inconsistent with depth " + depth.value().shape_str());
  detail::WarpCache<T> cache = detail::warp_project(depth.value(), depth_valid, rt.value(), cam);
  Tensor<T> out = detail::warp_sample(src, cache);
  if (mask_out) *mask_out = cache.valid;
  return g.op(std::move(out), {depth, rt},
              [di = depth.id(), ri = rt.id(), src, cache, cam](Graph<T>& g, int oi) {
                const Tensor<T>& go = g.grad(oi);
                const int C = src.dim(0), H = src.dim(1), W = src.dim(2);
                const bool need_d = g.node(di).needs_grad;
                const bool need_r = g.node(ri).needs_grad;
                if (!need_d && !need_r) return;
                Tensor<T>* gd = need_d ? &g.grad(di) : nullptr;
                Tensor<T>* gr = need_r ? &g.grad(ri) : nullptr;
                const Tensor<T>& depth_v = g.value(di);
                const Tensor<T>& rt_v = g.value(ri);
                for (int y = 0; y < H; ++y)
                  for (int x = 0; x < W; ++x) {
                    if (!cache.valid.at(y, x)) continue;
                    const double u = cache.u.at(y, x), v = cache.v.at(y, x);
                    const int x0 = std::min(static_cast<int>(std::floor(u)), W - 2 < 0 ? 0 : W - 2);
                    const int y0 = std::min(static_cast<int>(std::floor(v)), H - 2 < 0 ? 0 : H - 2);
                    const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
                    const double fu = u - x0, fv = v - y0;
                    // d(out)/du and d(out)/dv contracted with the output grad
                    double gu = 0.0, gv = 0.0;
                    for (int ch = 0; ch < C; ++ch) {
                      const double gch = static_cast<double>(go.at(ch, y, x));
                      if (gch == 0.0) continue;
                      const double v00 = src.at(ch, y0, x0), v01 = src.at(ch, y0, x1);
                      const double v10 = src.at(ch, y1, x0), v11 = src.at(ch, y1, x1);
                      gu += gch * ((1 - fv) * (v01 - v00) + fv * (v11 - v10));
                      gv += gch * ((1 - fu) * (v10 - v00) + fu * (v11 - v01));
                    }
                    if (gu == 0.0 && gv == 0.0) continue;
                    // chain through the projection
                    const double xs = cache.xs.at(y, x), ys = cache.ys.at(y, x),
                                 zs = cache.zs.at(y, x);
                    const double gxs = gu * cam.fx / zs;
                    const double gys = gv * cam.fy / zs;
                    const double gzs = -(gu * cam.fx * xs + gv * cam.fy * ys) / (zs * zs);
                    if (need_d) {
                      // X_s = R (d * dir) + t, so dX_s/dd = R dir
                      const double dirx = (x - cam.cx) / cam.fx;
                      const double diry = (y - cam.cy) / cam.fy;
                      const double rd0 = rt_v.at(0, 0) * dirx + rt_v.at(0, 1) * diry + rt_v.at(0, 2);
                      const double rd1 = rt_v.at(1, 0) * dirx + rt_v.at(1, 1) * diry + rt_v.at(1, 2);
                      const double rd2 = rt_v.at(2, 0) * dirx + rt_v.at(2, 1) * diry + rt_v.at(2, 2);
                      gd->at(y, x) += static_cast<T>(gxs * rd0 + gys * rd1 + gzs * rd2);
                    }
                    if (need_r) {
                      const double d = static_cast<double>(depth_v.at(y, x));
                      const double X = d * (x - cam.cx) / cam.fx;
                      const double Y = d * (y - cam.cy) / cam.fy;
                      const double Z = d;
                      const double gs[3] = {gxs, gys, gzs};
                      for (int a = 0; a < 3; ++a) {
                        gr->at(a, 0) += static_cast<T>(gs[a] * X);
                        gr->at(a, 1) += static_cast<T>(gs[a] * Y);
                        gr->at(a, 2) += static_cast<T>(gs[a] * Z);
                        gr->at(a, 3) += static_cast<T>(gs[a]);
                      }
                    }
                  }
              });
}

}  // namespace hd
