#pragma once

#include "hd/core/nn.hpp"
#include "hd/core/types.hpp"
#include "hd/geom/se3.hpp"

// Small convolutional regressor predicting a relative 6-DoF pose from a
// concatenated frame pair, plus the pose-source switch that lets training run
// from ground-truth trajectories instead.

namespace hd {

template <class T>
struct ToyPoseNet {
  Conv2dLayer<T> c1, c2, c3;
  LinearLayer<T> head;  // zero-initialized: identical frames give a zero pose

  explicit ToyPoseNet(RngState rng)
      : c1("posenet.c1", 6, 8, 3, 2, 1, rng),
        c2("posenet.c2", 8, 16, 3, 2, 1, rng),
        c3("posenet.c3", 16, 16, 3, 2, 1, rng),
        head("posenet.head", 16, 6, rng, /*zero_init=*/true) {}

  // frames are {3,H,W} tensors of the same extent
  Var<T> forward(Graph<T>& g, const Tensor<T>& frame_a, const Tensor<T>& frame_b,
                 bool train = true) {
    Var<T> x = concat_channels(g.constant(frame_a), g.constant(frame_b));
    x = elu(c1(g, x, train));
    x = elu(c2(g, x, train));
    x = elu(c3(g, x, train));
    Var<T> pooled = reshape(spatial_mean(x), {1, 16});
    Var<T> wt = head(g, pooled, train);
    // keep early predictions small so the warp stays near identity
    return reshape(scale(wt, T(0.01)), {6});
  }

  std::vector<ParamTensor<T>*> params() {
    std::vector<ParamTensor<T>*> out;
    c1.collect(out);
    c2.collect(out);
    c3.collect(out);
    head.collect(out);
    return out;
  }
};

enum class PoseMode { GroundTruth, ToyNetwork };

template <class T>
struct PoseSource {
  PoseMode mode = PoseMode::GroundTruth;
  ToyPoseNet<T>* net = nullptr;
  PoseSE3 ground_truth{};
};

template <class T>
PoseSE3 estimate_pose(const PoseSource<T>& source, const ImageFrameT<T>& frame_a,
                      const ImageFrameT<T>& frame_b) {
  if (source.mode == PoseMode::GroundTruth) return source.ground_truth;
  if (!source.net) throw std::invalid_argument("estimate_pose: network mode without a network");
  Graph<T> g;
  Var<T> wt = source.net->forward(g, frame_a.pixels, frame_b.pixels, /*train=*/false);
  PoseSE3 p;
  for (int i = 0; i < 3; ++i) {
    p.axis_angle[static_cast<size_t>(i)] = static_cast<double>(wt.value()[i]);
    p.translation[static_cast<size_t>(i)] = static_cast<double>(wt.value()[3 + i]);
  }
  return p;
}

}  // namespace hd
