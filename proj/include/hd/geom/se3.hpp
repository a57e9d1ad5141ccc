#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "hd/core/graph.hpp"

// Pinhole camera and SE(3) pose math. Convention: x right, y down, z forward;
// poses are world-to-camera (X_cam = R X_world + t); the relative transform
// taking frame a coordinates into frame b is M_{a->b} = T_b * T_a^-1.

namespace hd {

struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  CameraModel() = default;
  CameraModel(double fx_, double fy_, double cx_, double cy_, int w, int h)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {
    validate();
  }

  void validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("CameraModel: focal lengths must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      throw std::invalid_argument("CameraModel: principal point outside image");
  }
};

struct PoseSE3 {
  std::array<double, 3> axis_angle{};   // radians * unit axis
  std::array<double, 3> translation{};  // meters
};

namespace se3 {

using Mat3 = std::array<double, 9>;  // row-major

inline Mat3 rodrigues(const std::array<double, 3>& w) {
  const double t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  const double theta = std::sqrt(t2);
  double a, b;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < 1e-4) {
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / t2;
  }
  const double wx = w[0], wy = w[1], wz = w[2];
  // I + a [w]x + b [w]x^2
  return Mat3{1 - b * (wy * wy + wz * wz), b * wx * wy - a * wz,       b * wx * wz + a * wy,
              b * wx * wy + a * wz,       1 - b * (wx * wx + wz * wz), b * wy * wz - a * wx,
              b * wx * wz - a * wy,       b * wy * wz + a * wx,       1 - b * (wx * wx + wy * wy)};
}

inline std::array<double, 3> rotation_log(const Mat3& R) {
  const double tr = R[0] + R[4] + R[8];
  double c = (tr - 1.0) / 2.0;
  c = std::max(-1.0, std::min(1.0, c));
  const double theta = std::acos(c);
  const std::array<double, 3> skew = {R[7] - R[5], R[2] - R[6], R[3] - R[1]};
  if (theta < 1e-7) return {0.5 * skew[0], 0.5 * skew[1], 0.5 * skew[2]};
  if (theta > M_PI - 1e-5) {
    // near pi the skew part vanishes; recover the axis from R + I
    std::array<double, 3> a{};
    const double d0 = (R[0] + 1.0) / 2.0, d1 = (R[4] + 1.0) / 2.0, d2 = (R[8] + 1.0) / 2.0;
    if (d0 >= d1 && d0 >= d2) {
      a[0] = std::sqrt(std::max(0.0, d0));
      a[1] = (R[1] + R[3]) / (4.0 * a[0]);
      a[2] = (R[2] + R[6]) / (4.0 * a[0]);
    } else if (d1 >= d2) {
      a[1] = std::sqrt(std::max(0.0, d1));
      a[0] = (R[1] + R[3]) / (4.0 * a[1]);
      a[2] = (R[5] + R[7]) / (4.0 * a[1]);
    } else {
      a[2] = std::sqrt(std::max(0.0, d2));
      a[0] = (R[2] + R[6]) / (4.0 * a[2]);
      a[1] = (R[5] + R[7]) / (4.0 * a[2]);
    }
    // sign convention: keep consistency with the skew part when it is nonzero
    double dot = a[0] * skew[0] + a[1] * skew[1] + a[2] * skew[2];
    const double s = dot < 0.0 ? -theta : theta;
    const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    return {s * a[0] / n, s * a[1] / n, s * a[2] / n};
  }
  const double k = theta / (2.0 * std::sin(theta));
  return {k * skew[0], k * skew[1], k * skew[2]};
}

inline std::array<double, 3> apply(const Mat3& R, const std::array<double, 3>& v) {
  return {R[0] * v[0] + R[1] * v[1] + R[2] * v[2],
          R[3] * v[0] + R[4] * v[1] + R[5] * v[2],
          R[6] * v[0] + R[7] * v[1] + R[8] * v[2]};
}

inline Mat3 matmul3(const Mat3& A, const Mat3& B) {
  Mat3 C{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      C[static_cast<size_t>(i * 3 + j)] = A[static_cast<size_t>(i * 3)] * B[static_cast<size_t>(j)] +
                                          A[static_cast<size_t>(i * 3 + 1)] * B[static_cast<size_t>(3 + j)] +
                                          A[static_cast<size_t>(i * 3 + 2)] * B[static_cast<size_t>(6 + j)];
  return C;
}

inline Mat3 transpose3(const Mat3& R) {
  return Mat3{R[0], R[3], R[6], R[1], R[4], R[7], R[2], R[5], R[8]};
}

}  // namespace se3

inline TensorD pose_to_matrix(const PoseSE3& p) {
  const se3::Mat3 R = se3::rodrigues(p.axis_angle);
  TensorD M({4, 4});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) M.at(i, j) = R[static_cast<size_t>(i * 3 + j)];
    M.at(i, 3) = p.translation[static_cast<size_t>(i)];
  }
  M.at(3, 3) = 1.0;
  return M;
}

inline PoseSE3 matrix_to_pose(const TensorD& M) {
  if (M.rank() != 2 || M.dim(0) != 4 || M.dim(1) != 4)
    throw std::invalid_argument("matrix_to_pose: 4x4 matrix required");
  se3::Mat3 R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R[static_cast<size_t>(i * 3 + j)] = M.at(i, j);
  PoseSE3 p;
  p.axis_angle = se3::rotation_log(R);
  p.translation = {M.at(0, 3), M.at(1, 3), M.at(2, 3)};
  return p;
}

inline PoseSE3 pose_inverse(const PoseSE3& p) {
  const se3::Mat3 Rt = se3::transpose3(se3::rodrigues(p.axis_angle));
  const std::array<double, 3> t = se3::apply(Rt, p.translation);
  PoseSE3 q;
  q.axis_angle = {-p.axis_angle[0], -p.axis_angle[1], -p.axis_angle[2]};
  q.translation = {-t[0], -t[1], -t[2]};
  return q;
}

// applies first, then second
inline PoseSE3 pose_compose(const PoseSE3& second, const PoseSE3& first) {
  const se3::Mat3 R2 = se3::rodrigues(second.axis_angle);
  const se3::Mat3 R1 = se3::rodrigues(first.axis_angle);
  PoseSE3 out;
  out.axis_angle = se3::rotation_log(se3::matmul3(R2, R1));
  const std::array<double, 3> rt = se3::apply(R2, first.translation);
  out.translation = {rt[0] + second.translation[0], rt[1] + second.translation[1],
                     rt[2] + second.translation[2]};
  return out;
}

// transform taking coordinates of frame `from` into frame `to`
inline PoseSE3 relative_pose(const PoseSE3& from, const PoseSE3& to) {
  return pose_compose(to, pose_inverse(from));
}

// ---- differentiable axis-angle + translation -> [R|t] ----

namespace detail {

// d(R)/d(w_i) for all i, each a row-major 3x3 block
inline std::array<se3::Mat3, 3> rodrigues_jacobian(const std::array<double, 3>& w) {
  const se3::Mat3 R = se3::rodrigues(w);
  const double t2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
  std::array<se3::Mat3, 3> J;
  auto cross_mat = [](double x, double y, double z) {
    return se3::Mat3{0, -z, y, z, 0, -x, -y, x, 0};
  };
  if (t2 < 1e-8) {
    // second-order expansion: d/dw_i [ I + [w]x + [w]x^2/2 ]
    const se3::Mat3 W = cross_mat(w[0], w[1], w[2]);
    for (int i = 0; i < 3; ++i) {
      const se3::Mat3 E = cross_mat(i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0);
      se3::Mat3 ew = se3::matmul3(E, W);
      se3::Mat3 we = se3::matmul3(W, E);
      se3::Mat3& Ji = J[static_cast<size_t>(i)];
      for (int k = 0; k < 9; ++k)
        Ji[static_cast<size_t>(k)] = E[static_cast<size_t>(k)] +
                                     0.5 * (ew[static_cast<size_t>(k)] + we[static_cast<size_t>(k)]);
    }
    return J;
  }
  // dR/dw_i = ( w_i [w]x + [ w x ((I - R) e_i) ]x ) / |w|^2 * R
  const se3::Mat3 W = cross_mat(w[0], w[1], w[2]);
  for (int i = 0; i < 3; ++i) {
    std::array<double, 3> col = {(i == 0 ? 1.0 : 0.0) - R[static_cast<size_t>(i)],
                                 (i == 1 ? 1.0 : 0.0) - R[static_cast<size_t>(3 + i)],
                                 (i == 2 ? 1.0 : 0.0) - R[static_cast<size_t>(6 + i)]};
    const std::array<double, 3> wc = {w[1] * col[2] - w[2] * col[1],
                                      w[2] * col[0] - w[0] * col[2],
                                      w[0] * col[1] - w[1] * col[0]};
    se3::Mat3 A = cross_mat(wc[0], wc[1], wc[2]);
    for (int k = 0; k < 9; ++k)
      A[static_cast<size_t>(k)] = w[static_cast<size_t>(i)] * W[static_cast<size_t>(k)] + A[static_cast<size_t>(k)];
    for (double& v : A) v /= t2;
    J[static_cast<size_t>(i)] = se3::matmul3(A, R);
  }
  return J;
}

}  // namespace detail

// {6} (w, t) -> {3,4} [R|t], differentiable in all six components
template <class T>
Var<T> rodrigues_rt(Var<T> wt) {
  Graph<T>& g = *wt.graph();
  const Tensor<T>& v = wt.value();
  if (v.numel() != 6) throw std::invalid_argument("rodrigues_rt: 6-vector required");
  const std::array<double, 3> w = {static_cast<double>(v[0]), static_cast<double>(v[1]),
                                   static_cast<double>(v[2])};
  const se3::Mat3 R = se3::rodrigues(w);
  Tensor<T> out({3, 4});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.at(i, j) = static_cast<T>(R[static_cast<size_t>(i * 3 + j)]);
    out.at(i, 3) = v[3 + i];
  }
  return g.op(std::move(out), {wt}, [wi = wt.id(), w](Graph<T>& g, int oi) {
    if (!g.node(wi).needs_grad) return;
    const Tensor<T>& go = g.grad(oi);
    Tensor<T>& gw = g.grad(wi);
    const std::array<se3::Mat3, 3> J = detail::rodrigues_jacobian(w);
    for (int i = 0; i < 3; ++i) {
      double acc = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          acc += static_cast<double>(go.at(a, b)) * J[static_cast<size_t>(i)][static_cast<size_t>(a * 3 + b)];
      gw[i] += static_cast<T>(acc);
    }
    for (int i = 0; i < 3; ++i) gw[3 + i] += go.at(i, 3);
  });
}

}  // namespace hd
