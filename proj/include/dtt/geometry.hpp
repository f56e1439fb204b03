#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dtt {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// Rigid transform x -> rotation * x + translation. Rotation is kept as a
// matrix; files carry it as a unit quaternion.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Quat &q, const Vec3 &t);
  static Pose from_axis_angle(const Vec3 &axis, double angle,
                              const Vec3 &t = Vec3::Zero());

  Vec3 apply(const Vec3 &p) const { return rotation * p + translation; }

  // Unit quaternion with w >= 0, so serialization is unique.
  Quat quaternion() const;

  // Checks orthonormality and det = +1 within tol.
  bool is_valid(double tol = 1e-9) const;

  // Returns this pose after a quaternion round trip, i.e. exactly what a
  // reader of the serialized form reconstructs.
  Pose canonical() const;
};

// compose(a, b) applies b first, then a.
Pose compose(const Pose &a, const Pose &b);
Pose inverse(const Pose &p);

// Angle of the relative rotation between two poses, radians.
double rotation_distance(const Pose &a, const Pose &b);

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double depth_scale = 0.0;  // meters per raw depth unit

  // Throws InputError when an invariant does not hold.
  void validate() const;
};

// Row-major height x width raw depth; 0 marks a missing measurement.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> raw;

  std::uint16_t at(int u, int v) const {
    return raw[static_cast<std::size_t>(v) * width + u];
  }
};

// Row-major interleaved 8-bit RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;                 // empty or one per point, in [0,1]
  std::vector<std::uint32_t> pixel_index;   // empty or one per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }
  bool has_pixel_index() const { return !pixel_index.empty(); }

  // Throws InputError on non-finite coordinates or mismatched optional fields.
  void validate() const;
};

// Pinhole backprojection of every valid pixel on a stride grid. Pixel (u, v)
// sits at integer coordinates; x right, y down, z forward.
PointCloud backproject(const DepthFrame &depth,
                       const CameraIntrinsics &intrinsics,
                       const RgbImage *color = nullptr, int stride = 1);

PointCloud transform(const PointCloud &cloud, const Pose &pose);
std::vector<Vec3> transform(std::span<const Vec3> points, const Pose &pose);

struct Projection {
  std::vector<Eigen::Vector2d> pixels;
  std::vector<double> depths;
  std::vector<bool> valid;  // false where z <= 0
};

Projection project(std::span<const Vec3> points,
                   const CameraIntrinsics &intrinsics);

}  // namespace dtt
