#pragma once

#include <algorithm>
#include <cmath>

#include "hd/synth/scene.hpp"

// Analytic ray-cast renderer: every pixel is classified as ground, box, or sky
// with closed-form depth, so rendered pairs are exact correspondence oracles.
// Texture detail fades with distance to keep warped resampling error small.

namespace hd {

namespace detail {

struct TextureParams {
  double f1x, f1z, ph1;
  double f2x, f2z, ph2;
  double f3x, f3z, ph3;
  double box_phase = 0;
  std::vector<std::array<double, 3>> box_base;
};

inline TextureParams make_texture(const SceneSpec& spec) {
  RngState rng = make_rng(spec.texture_seed, "scene/texture");
  TextureParams t;
  t.f1x = rng.uniform(0.6, 1.1);
  t.f1z = rng.uniform(0.4, 0.9);
  t.ph1 = rng.uniform(0.0, 6.28);
  t.f2x = rng.uniform(0.9, 1.6);
  t.f2z = rng.uniform(0.7, 1.3);
  t.ph2 = rng.uniform(0.0, 6.28);
  t.f3x = rng.uniform(0.3, 0.7);
  t.f3z = rng.uniform(0.9, 1.5);
  t.ph3 = rng.uniform(0.0, 6.28);
  t.box_phase = rng.uniform(0.0, 6.28);
  RngState brng = rng.fork("boxes");
  for (size_t i = 0; i < spec.boxes.size(); ++i)
    t.box_base.push_back(
        {brng.uniform(0.34, 0.64), brng.uniform(0.34, 0.64), brng.uniform(0.34, 0.64)});
  return t;
}

// high frequencies vanish with distance so bilinear resampling stays faithful
inline double texture_fade(double s) { return 1.0 / (1.0 + 0.015 * s * s); }

inline double smoothstep01(double t) {
  t = std::min(1.0, std::max(0.0, t));
  return t * t * (3.0 - 2.0 * t);
}

struct RayHit {
  enum Kind { Ground, Box, Sky } kind = Sky;
  double s = 0;             // depth along the optical axis
  double px = 0, py = 0, pz = 0;  // world hit point
  int box_index = -1;
  int box_axis = 0;  // slab axis that produced the entry face
};

inline RayHit cast_ray(const SceneSpec& spec, const std::array<double, 3>& C,
                       const std::array<double, 3>& D) {
  RayHit hit;
  double best = 1e18;
  if (D[1] > 1e-9) {
    const double s = (spec.camera_height - C[1]) / D[1];
    if (s > 0.05) {
      best = s;
      hit.kind = RayHit::Ground;
      hit.s = s;
    }
  }
  for (size_t b = 0; b < spec.boxes.size(); ++b) {
    const BoxObstacle& box = spec.boxes[b];
    const double lo[3] = {box.center_x - box.width / 2, spec.camera_height - box.height,
                          box.center_z - box.depth / 2};
    const double hi[3] = {box.center_x + box.width / 2, spec.camera_height,
                          box.center_z + box.depth / 2};
    double t0 = 0.05, t1 = 1e18;
    int axis0 = -1;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (std::abs(D[static_cast<size_t>(a)]) < 1e-12) {
        if (C[static_cast<size_t>(a)] < lo[a] || C[static_cast<size_t>(a)] > hi[a]) miss = true;
        continue;
      }
      double tn = (lo[a] - C[static_cast<size_t>(a)]) / D[static_cast<size_t>(a)];
      double tf = (hi[a] - C[static_cast<size_t>(a)]) / D[static_cast<size_t>(a)];
      if (tn > tf) std::swap(tn, tf);
      if (tn > t0) {
        t0 = tn;
        axis0 = a;
      }
      t1 = std::min(t1, tf);
    }
    if (miss || t1 < t0) continue;
    if (t0 < best) {
      best = t0;
      hit.kind = RayHit::Box;
      hit.s = t0;
      hit.box_index = static_cast<int>(b);
      hit.box_axis = axis0 < 0 ? 2 : axis0;
    }
  }
  if (hit.kind != RayHit::Sky) {
    hit.px = C[0] + hit.s * D[0];
    hit.py = C[1] + hit.s * D[1];
    hit.pz = C[2] + hit.s * D[2];
  }
  return hit;
}

inline std::array<double, 3> shade(const SceneSpec& spec, const TextureParams& tex,
                                   const RayHit& hit, const std::array<double, 3>& D) {
  std::array<double, 3> rgb;
  if (hit.kind == RayHit::Sky) {
    const double horizon = smoothstep01(0.5 - 3.0 * D[1]);
    rgb = {0.55 + 0.10 * horizon, 0.63 + 0.08 * horizon, 0.80 + 0.05 * horizon};
  } else if (hit.kind == RayHit::Ground) {
    const double fade = texture_fade(hit.s);
    double v = 0.42 + fade * (0.10 * std::sin(tex.f1x * hit.px + tex.f1z * hit.pz + tex.ph1) +
                              0.07 * std::sin(tex.f2x * hit.px - tex.f2z * hit.pz + tex.ph2) +
                              0.05 * std::cos(tex.f3x * hit.px + tex.f3z * hit.pz + tex.ph3));
    for (double lane_x : spec.lane_positions()) {
      const double dist = std::abs(hit.px - lane_x);
      v += 0.38 * fade * smoothstep01((0.18 - dist) / 0.12);
    }
    rgb = {v * 1.04, v, v * 0.92};
  } else {
    const std::array<double, 3>& base = tex.box_base[static_cast<size_t>(hit.box_index)];
    const double fade = texture_fade(hit.s);
    const double pattern = fade * (0.08 * std::sin(2.2 * hit.py + tex.box_phase) +
                                   0.06 * std::sin(1.7 * (hit.px + hit.pz)));
    const double face = hit.box_axis == 1 ? 1.12 : (hit.box_axis == 0 ? 0.85 : 1.0);
    rgb = {face * (base[0] + pattern), face * (base[1] + pattern), face * (base[2] + pattern)};
  }
  for (double& c : rgb) c = std::min(0.99, std::max(0.01, c));
  return rgb;
}

}  // namespace detail

inline std::vector<LaneAnnotation> project_lanes(const SceneSpec& spec, int frame_index) {
  const PoseSE3& pose = spec.trajectory[static_cast<size_t>(frame_index)];
  const CameraModel& cam = spec.cam;
  std::vector<LaneAnnotation> lanes;
  const double rot = std::abs(pose.axis_angle[0]) + std::abs(pose.axis_angle[1]) +
                     std::abs(pose.axis_angle[2]);
  const double s_min = 1.5, s_cap = 0.95 * kDepthMax;
  for (double lane_x : spec.lane_positions()) {
    LaneAnnotation lane;
    lane.image_id = frame_index;
    if (rot < 1e-12) {
      // translation-only pose: invert the row equation exactly
      const double tx = pose.translation[0], ty = pose.translation[1];
      for (int y = cam.height - 1; y >= 0; --y) {
        const double denom = y - cam.cy;
        if (denom <= 1e-9) break;
        const double s = cam.fy * (spec.camera_height + ty) / denom;
        if (s < s_min || s > s_cap) continue;
        const double u = cam.cx + cam.fx * (lane_x + tx) / s;
        if (u < 0 || u > cam.width - 1) continue;
        lane.polyline.push_back({u, static_cast<double>(y)});
      }
    } else {
      // general pose: dense world samples bucketed per image row
      const se3::Mat3 R = se3::rodrigues(pose.axis_angle);
      const std::array<double, 3> C = {
          -(R[0] * pose.translation[0] + R[3] * pose.translation[1] + R[6] * pose.translation[2]),
          -(R[1] * pose.translation[0] + R[4] * pose.translation[1] + R[7] * pose.translation[2]),
          -(R[2] * pose.translation[0] + R[5] * pose.translation[1] + R[8] * pose.translation[2])};
      std::vector<std::array<double, 3>> best(static_cast<size_t>(cam.height),
                                              {0.0, 0.0, 1e18});  // (u, v, row error)
      const int n = 1200;
      for (int k = 0; k < n; ++k) {
        const double s_world = s_min * std::pow(s_cap / s_min, k / static_cast<double>(n - 1));
        const std::array<double, 3> P = {lane_x, spec.camera_height, C[2] + s_world};
        const std::array<double, 3> pc = se3::apply(R, {P[0] - 0.0, P[1] - 0.0, P[2] - 0.0});
        const std::array<double, 3> pcam = {pc[0] + pose.translation[0],
                                            pc[1] + pose.translation[1],
                                            pc[2] + pose.translation[2]};
        if (pcam[2] < s_min) continue;
        const double u = cam.cx + cam.fx * pcam[0] / pcam[2];
        const double v = cam.cy + cam.fy * pcam[1] / pcam[2];
        if (u < 0 || u > cam.width - 1 || v < 0 || v > cam.height - 1) continue;
        const int row = static_cast<int>(std::lround(v));
        if (row < 0 || row >= cam.height) continue;
        const double err = std::abs(v - row);
        if (err < best[static_cast<size_t>(row)][2]) best[static_cast<size_t>(row)] = {u, v, err};
      }
      double prev_y = 1e18;
      for (int y = cam.height - 1; y >= 0; --y)
        if (best[static_cast<size_t>(y)][2] < 0.5 && best[static_cast<size_t>(y)][1] < prev_y) {
          lane.polyline.push_back({best[static_cast<size_t>(y)][0], best[static_cast<size_t>(y)][1]});
          prev_y = best[static_cast<size_t>(y)][1];
        }
    }
    if (lane.polyline.size() >= 2) {
      lane.validate(cam.width, cam.height);
      lanes.push_back(std::move(lane));
    }
  }
  return lanes;
}

inline RenderedFrame render(const SceneSpec& spec, int frame_index) {
  spec.validate();
  if (frame_index < 0 || frame_index >= static_cast<int>(spec.trajectory.size()))
    throw std::out_of_range("render: frame index " + std::to_string(frame_index) +
                            " outside trajectory of length " +
                            std::to_string(spec.trajectory.size()));
  const CameraModel& cam = spec.cam;
  const PoseSE3& pose = spec.trajectory[static_cast<size_t>(frame_index)];
  const detail::TextureParams tex = detail::make_texture(spec);

  const se3::Mat3 R = se3::rodrigues(pose.axis_angle);
  const se3::Mat3 Rt = se3::transpose3(R);
  const std::array<double, 3> C = se3::apply(Rt, {-pose.translation[0], -pose.translation[1],
                                                  -pose.translation[2]});

  TensorF pixels({3, cam.height, cam.width});
  TensorF depth({cam.height, cam.width});
  Tensor<uint8_t> valid({cam.height, cam.width});
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const std::array<double, 3> d_cam = {(x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0};
      const std::array<double, 3> D = se3::apply(Rt, d_cam);
      const detail::RayHit hit = detail::cast_ray(spec, C, D);
      const std::array<double, 3> rgb = detail::shade(spec, tex, hit, D);
      for (int c = 0; c < 3; ++c) pixels.at(c, y, x) = static_cast<float>(rgb[static_cast<size_t>(c)]);
      if (hit.kind == detail::RayHit::Sky || hit.s > kDepthMax) {
        depth.at(y, x) = static_cast<float>(kDepthMax);
        valid.at(y, x) = 0;
      } else {
        depth.at(y, x) = static_cast<float>(std::max(hit.s, kDepthMin));
        valid.at(y, x) = 1;
      }
    }

  RenderedFrame out;
  out.image = ImageFrame(std::move(pixels), frame_index, frame_index);
  out.depth = DepthMap(std::move(depth), std::move(valid));
  out.lanes = project_lanes(spec, frame_index);
  out.pose = pose;
  return out;
}

struct RenderedPair {
  RenderedFrame a, b;
  PoseSE3 a_to_b;  // relative transform, frame-a coordinates into frame b
};

inline RenderedPair render_pair(const SceneSpec& spec, int frame_index) {
  if (frame_index + 1 >= static_cast<int>(spec.trajectory.size()))
    throw std::out_of_range("render_pair: trajectory ends before frame " +
                            std::to_string(frame_index + 1));
  RenderedPair out{render(spec, frame_index), render(spec, frame_index + 1), {}};
  out.a_to_b = relative_pose(out.a.pose, out.b.pose);
  return out;
}

}  // namespace hd
