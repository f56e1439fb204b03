#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dtt/geometry.hpp"

namespace dtt {

// Shared z-buffer for triangle meshes. Pixel (u, v) samples the image plane
// at integer coordinates, matching backproject(). Depth is interpolated
// perspective-correctly, so each written depth lies on the triangle's plane.
class ZBuffer {
 public:
  static constexpr double kEmpty = std::numeric_limits<double>::infinity();
  static constexpr double kNearPlane = 1e-4;  // meters

  explicit ZBuffer(const CameraIntrinsics &intrinsics);

  // Draws camera-frame triangles under the given label. A pixel is written
  // only when strictly nearer than what is stored. Triangles are clipped at
  // the near plane; there is no back-face culling.
  void draw(std::span<const Vec3> camera_vertices,
            std::span<const Eigen::Vector3i> triangles, int label);

  int width() const { return width_; }
  int height() const { return height_; }
  const CameraIntrinsics &intrinsics() const { return intrinsics_; }

  const std::vector<double> &depth() const { return depth_; }
  const std::vector<int> &label() const { return label_; }   // -1 when empty
  const std::vector<int> &face() const { return face_; }     // triangle index

  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * width_ + u;
  }

 private:
  void fill(const Vec3 (&cam)[3], int label, int face);

  CameraIntrinsics intrinsics_;
  int width_;
  int height_;
  std::vector<double> depth_;
  std::vector<int> label_;
  std::vector<int> face_;
};

}  // namespace dtt
