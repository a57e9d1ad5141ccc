#pragma once

#include <vector>

#include "hd/coarse/lanes.hpp"
#include "hd/core/rng.hpp"
#include "hd/core/types.hpp"
#include "hd/geom/se3.hpp"

namespace hd {

// Axis-aligned obstacle standing on the ground plane.
struct BoxObstacle {
  double center_x = 0, center_z = 0;  // footprint center, world coords
  double width = 1, height = 1, depth = 1;
};

struct SceneSpec {
  double camera_height = 1.5;  // meters above ground
  CameraModel cam;
  double corridor_width = 7.2;  // outer lane lines sit at +-width/2
  std::uint64_t texture_seed = 0;
  std::vector<BoxObstacle> boxes;
  std::vector<PoseSE3> trajectory;  // world-to-camera per frame

  std::vector<double> lane_positions() const {
    return {-corridor_width / 2.0, 0.0, corridor_width / 2.0};
  }

  void validate() const {
    if (camera_height <= 0) throw std::invalid_argument("SceneSpec: camera height must be positive");
    cam.validate();
    if (trajectory.empty()) throw std::invalid_argument("SceneSpec: empty trajectory");
    for (const BoxObstacle& b : boxes)
      if (b.height <= 0 || b.width <= 0 || b.depth <= 0 || b.height > camera_height * 4)
        throw std::invalid_argument("SceneSpec: degenerate obstacle");
  }
};

struct RenderedFrame {
  ImageFrame image;
  DepthMap depth;
  std::vector<LaneAnnotation> lanes;
  PoseSE3 pose;  // world-to-camera
};

// KITTI-ish intrinsics for a given extent: focal 0.58 W, horizon slightly
// above center so enough ground rows survive at test resolutions.
inline CameraModel make_corridor_camera(int width, int height) {
  const double f = 0.58 * width;
  return CameraModel(f, f, (width - 1) / 2.0, 0.45 * (height - 1), width, height);
}

// Straight constant-velocity corridor. Obstacles, when requested, are placed
// between the lane lines so lane-guided patches never land on them.
inline SceneSpec make_corridor_spec(std::uint64_t seed, const CameraModel& cam, int n_frames,
                                    double speed = 0.5, int n_boxes = 0) {
  SceneSpec spec;
  spec.cam = cam;
  spec.texture_seed = seed;
  for (int i = 0; i < n_frames; ++i) {
    PoseSE3 p;
    p.translation = {0.0, 0.0, -speed * i};
    spec.trajectory.push_back(p);
  }
  RngState rng = make_rng(seed, "scene/boxes");
  for (int i = 0; i < n_boxes; ++i) {
    BoxObstacle b;
    const double side = (i % 2 == 0) ? 1.0 : -1.0;
    b.center_x = side * rng.uniform(1.7, 2.1);
    b.center_z = 8.0 + 9.0 * i + rng.uniform(-1.5, 1.5) + speed * n_frames * 0.5;
    b.width = rng.uniform(0.6, 1.0);
    b.height = rng.uniform(0.8, 1.4);
    b.depth = rng.uniform(0.6, 1.0);
    spec.boxes.push_back(b);
  }
  spec.validate();
  return spec;
}

}  // namespace hd
