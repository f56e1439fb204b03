#include "dtt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dtt/error.hpp"

namespace dtt {

Pose Pose::from_quaternion(const Quat &q, const Vec3 &t) {
  if (!(q.norm() > 0.0) || !std::isfinite(q.norm())) {
    throw InputError("quaternion must be finite and non-zero");
  }
  Pose p;
  p.rotation = q.normalized().toRotationMatrix();
  p.translation = t;
  return p;
}

Pose Pose::from_axis_angle(const Vec3 &axis, double angle, const Vec3 &t) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  p.translation = t;
  return p;
}

Quat Pose::quaternion() const {
  Quat q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose Pose::canonical() const { return from_quaternion(quaternion(), translation); }

Pose compose(const Pose &a, const Pose &b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

Pose inverse(const Pose &p) {
  Pose out;
  out.rotation = p.rotation.transpose();
  out.translation = -(out.rotation * p.translation);
  return out;
}

double rotation_distance(const Pose &a, const Pose &b) {
  const Mat3 rel = a.rotation.transpose() * b.rotation;
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw InputError("image size must be > 0");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw InputError("principal point outside the image");
  }
  if (!(depth_scale > 0.0)) throw InputError("depth_scale must be > 0");
}

void PointCloud::validate() const {
  for (const auto &p : points) {
    if (!p.allFinite()) throw InputError("point cloud has non-finite coordinates");
  }
  if (!colors.empty() && colors.size() != points.size()) {
    throw InputError("color count does not match point count");
  }
  if (!pixel_index.empty() && pixel_index.size() != points.size()) {
    throw InputError("pixel index count does not match point count");
  }
}

PointCloud backproject(const DepthFrame &depth,
                       const CameraIntrinsics &intrinsics,
                       const RgbImage *color, int stride) {
  intrinsics.validate();
  if (stride < 1) throw InputError("stride must be positive");
  if (depth.width != intrinsics.width || depth.height != intrinsics.height) {
    throw InputError("depth frame is " + std::to_string(depth.width) + "x" +
                     std::to_string(depth.height) + " but intrinsics expect " +
                     std::to_string(intrinsics.width) + "x" +
                     std::to_string(intrinsics.height));
  }
  if (depth.raw.size() !=
      static_cast<std::size_t>(depth.width) * static_cast<std::size_t>(depth.height)) {
    throw InputError("depth buffer size does not match its dimensions");
  }
  if (color && (color->width != depth.width || color->height != depth.height ||
                color->data.size() != depth.raw.size() * 3)) {
    throw InputError("color image dimensions differ from depth");
  }

  PointCloud cloud;
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const std::uint16_t raw = depth.at(u, v);
      if (raw == 0) continue;
      const double z = raw * intrinsics.depth_scale;
      cloud.points.emplace_back((u - intrinsics.cx) * z / intrinsics.fx,
                                (v - intrinsics.cy) * z / intrinsics.fy, z);
      const auto idx = static_cast<std::uint32_t>(v) * depth.width + u;
      cloud.pixel_index.push_back(idx);
      if (color) {
        const std::uint8_t *c = &color->data[std::size_t{idx} * 3];
        cloud.colors.emplace_back(c[0] / 255.0, c[1] / 255.0, c[2] / 255.0);
      }
    }
  }
  return cloud;
}

PointCloud transform(const PointCloud &cloud, const Pose &pose) {
  PointCloud out = cloud;
  for (auto &p : out.points) p = pose.apply(p);
  return out;
}

std::vector<Vec3> transform(std::span<const Vec3> points, const Pose &pose) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto &p : points) out.push_back(pose.apply(p));
  return out;
}

Projection project(std::span<const Vec3> points,
                   const CameraIntrinsics &intrinsics) {
  Projection out;
  out.pixels.reserve(points.size());
  out.depths.reserve(points.size());
  out.valid.reserve(points.size());
  for (const auto &p : points) {
    const double z = p.z();
    const bool ok = z > 0.0;
    out.valid.push_back(ok);
    out.depths.push_back(z);
    if (ok) {
      out.pixels.emplace_back(intrinsics.fx * p.x() / z + intrinsics.cx,
                              intrinsics.fy * p.y() / z + intrinsics.cy);
    } else {
      out.pixels.emplace_back(std::nan(""), std::nan(""));
    }
  }
  return out;
}

}  // namespace dtt
