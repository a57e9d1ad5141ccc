#pragma once

#include "hd/coarse/lanes.hpp"
#include "hd/enc/encoder.hpp"

// Lane-guided ordinal patch sampling. Rank 0 is the patch highest in the
// image, hence the farthest point on the lane; row positions are regular
// along the lane's vertical extent and only the column carries randomness.

namespace hd {

inline constexpr int kDefaultPatchCount = 7;
inline constexpr int kPatchExtent = 3;  // pooled footprint, feature cells

struct PatchDescriptor {
  int center_x = 0, center_y = 0;  // feature-cell coords
  int rank_index = 0;              // 0 = farthest
};

template <class T>
struct PatchSetT {
  int level = 0, stride = 4, extent = kPatchExtent;
  std::vector<PatchDescriptor> patches;  // rank order
  Tensor<T> pooled;                      // {K, C}, unit-norm rows

  void validate() const {
    for (size_t i = 0; i < patches.size(); ++i) {
      if (patches[i].rank_index != static_cast<int>(i))
        throw std::logic_error("PatchSet: rank indices must be 0..K-1 in order");
      if (i && patches[i].center_y <= patches[i - 1].center_y)
        throw std::logic_error("PatchSet: center rows must strictly increase with rank");
    }
    for (int i = 0; i < pooled.dim(0); ++i) {
      double n2 = 0;
      for (int j = 0; j < pooled.dim(1); ++j) n2 += double(pooled.at(i, j)) * pooled.at(i, j);
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-5)
        throw std::logic_error("PatchSet: pooled rows must be unit-norm");
    }
  }
};
using PatchSet = PatchSetT<float>;

template <class T>
struct PatchSetVarsT {
  int level = 0, stride = 4, extent = kPatchExtent;
  std::vector<PatchDescriptor> patches;
  Var<T> pooled;  // {K, C}, unit-norm rows
};

namespace detail {

// pixel row/col <-> feature cell mapping at a given reduction factor
inline double to_feature(double pixel, int stride) { return (pixel + 0.5) / stride - 0.5; }
inline double to_pixel(double cell, int stride) { return (cell + 0.5) * stride - 0.5; }

}  // namespace detail

// Distinct integer feature rows covered by the lane's vertical span.
inline int lane_feature_rows(const LaneAnnotation& lane, int stride) {
  if (lane.polyline.size() < 2) return 0;
  const int top = static_cast<int>(std::ceil(detail::to_feature(lane.min_y(), stride)));
  const int bottom = static_cast<int>(std::floor(detail::to_feature(lane.max_y(), stride)));
  return bottom - top + 1;
}

inline bool lane_feasible(const LaneAnnotation& lane, int stride, int k) {
  return lane_feature_rows(lane, stride) >= k;
}

// Row and column placement shared by the plain and graph pooling paths.
inline std::vector<PatchDescriptor> place_patches(const LaneAnnotation& lane, int stride, int h,
                                                  int w, RngState& rng, int k,
                                                  int extent = kPatchExtent) {
  if (k < 2) throw std::invalid_argument("place_patches: need k >= 2 ranks");
  const int rows = lane_feature_rows(lane, stride);
  if (rows < k)
    throw std::invalid_argument("place_patches: lane spans " + std::to_string(rows) +
                                " feature rows at reduction " + std::to_string(stride) +
                                ", need " + std::to_string(k));
  const int half = extent / 2;
  // space rows over the part of the span the pooling footprint can reach;
  // lanes usually run all the way to the image border
  const int top =
      std::max(static_cast<int>(std::ceil(detail::to_feature(lane.min_y(), stride))), half);
  const int bottom =
      std::min(static_cast<int>(std::floor(detail::to_feature(lane.max_y(), stride))), h - 1 - half);
  const int band = bottom - top + 1;
  std::vector<PatchDescriptor> out;
  int prev_y = -1;
  for (int i = 0; i < k; ++i) {
    // one row per equal segment of the span, highest first
    const int row = top + static_cast<int>((i + 0.5) * band / k);
    const double lane_x = lane.x_at(detail::to_pixel(row, stride));
    const int col =
        static_cast<int>(std::lround(detail::to_feature(lane_x, stride))) + rng.uniform_int(-2, 2);
    PatchDescriptor p;
    p.center_y = std::min(std::max(row, half), h - 1 - half);
    p.center_x = std::min(std::max(col, half), w - 1 - half);
    p.rank_index = i;
    if (p.center_y <= prev_y)
      throw std::invalid_argument(
          "place_patches: clamping to the feature grid broke strict rank ordering");
    prev_y = p.center_y;
    out.push_back(p);
  }
  return out;
}

// Differentiable pooling: mean over the extent x extent cells, L2-normalized.
template <class T>
PatchSetVarsT<T> select_patches(Graph<T>& g, Var<T> level_map, int level, int stride,
                                const LaneAnnotation& lane, RngState& rng, int k,
                                int extent = kPatchExtent) {
  if (level_map.value().rank() != 3)
    throw std::invalid_argument("select_patches: level map must be {C,H,W}");
  const int mc = level_map.value().dim(0);
  const int mh = level_map.value().dim(1);
  const int mw = level_map.value().dim(2);
  PatchSetVarsT<T> set;
  set.level = level;
  set.stride = stride;
  set.extent = extent;
  set.patches = place_patches(lane, stride, mh, mw, rng, k, extent);
  const int half = extent / 2;
  std::vector<Var<T>> rows;
  for (const PatchDescriptor& p : set.patches) {
    Var<T> cells = slice3(level_map, 0, mc, p.center_y - half, p.center_y + half + 1,
                          p.center_x - half, p.center_x + half + 1);
    rows.push_back(spatial_mean(cells));
  }
  set.pooled = normalize_rows(stack_rows(rows));
  return set;
}

// Plain evaluation on a fused pyramid.
template <class T>
PatchSetT<T> select_patches(const FeaturePyramidT<T>& fused, const LaneAnnotation& lane,
                            RngState& rng, int k, int level = 0, int extent = kPatchExtent) {
  Graph<T> g;
  const int stride = kPyramidStrides[static_cast<size_t>(level)];
  PatchSetVarsT<T> vars = select_patches(
      g, g.constant(fused.levels[static_cast<size_t>(level)]), level, stride, lane, rng, k, extent);
  PatchSetT<T> out;
  out.level = vars.level;
  out.stride = vars.stride;
  out.extent = vars.extent;
  out.patches = std::move(vars.patches);
  out.pooled = vars.pooled.value();
  return out;
}

}  // namespace hd
