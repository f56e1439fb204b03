#include "dtt/raster.hpp"

#include <algorithm>
#include <cmath>

namespace dtt {

ZBuffer::ZBuffer(const CameraIntrinsics &intrinsics)
    : intrinsics_{intrinsics},
      width_{intrinsics.width},
      height_{intrinsics.height},
      depth_(static_cast<std::size_t>(intrinsics.width) * intrinsics.height, kEmpty),
      label_(depth_.size(), -1),
      face_(depth_.size(), -1) {
  intrinsics.validate();
}

void ZBuffer::draw(std::span<const Vec3> camera_vertices,
                   std::span<const Eigen::Vector3i> triangles, int label) {
  for (std::size_t f = 0; f < triangles.size(); ++f) {
    const auto &t = triangles[f];
    const Vec3 in[3] = {camera_vertices[t[0]], camera_vertices[t[1]],
                        camera_vertices[t[2]]};

    // Sutherland-Hodgman against z >= near; yields at most 4 vertices.
    Vec3 poly[4];
    int count = 0;
    for (int i = 0; i < 3; ++i) {
      const Vec3 &a = in[i];
      const Vec3 &b = in[(i + 1) % 3];
      const bool a_in = a.z() >= kNearPlane;
      const bool b_in = b.z() >= kNearPlane;
      if (a_in) poly[count++] = a;
      if (a_in != b_in) {
        const double s = (kNearPlane - a.z()) / (b.z() - a.z());
        Vec3 cut = a + s * (b - a);
        cut.z() = kNearPlane;
        poly[count++] = cut;
      }
    }
    if (count < 3) continue;
    const int id = static_cast<int>(f);
    fill({poly[0], poly[1], poly[2]}, label, id);
    if (count == 4) fill({poly[0], poly[2], poly[3]}, label, id);
  }
}

void ZBuffer::fill(const Vec3 (&cam)[3], int label, int face) {
  const auto &k = intrinsics_;
  double sx[3], sy[3], inv_z[3];
  for (int i = 0; i < 3; ++i) {
    inv_z[i] = 1.0 / cam[i].z();
    sx[i] = k.fx * cam[i].x() * inv_z[i] + k.cx;
    sy[i] = k.fy * cam[i].y() * inv_z[i] + k.cy;
  }
  double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0]);
  if (area == 0.0 || !std::isfinite(area)) return;
  int order[3] = {0, 1, 2};
  if (area < 0.0) {
    std::swap(order[1], order[2]);
    area = -area;
  }
  const double x0 = sx[order[0]], y0 = sy[order[0]];
  const double x1 = sx[order[1]], y1 = sy[order[1]];
  const double x2 = sx[order[2]], y2 = sy[order[2]];
  const double iz0 = inv_z[order[0]], iz1 = inv_z[order[1]], iz2 = inv_z[order[2]];

  // Top-left rule for y-down coordinates with positive edge functions inside.
  auto top_left = [](double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    return (dy == 0.0 && dx > 0.0) || dy < 0.0;
  };
  const bool tl0 = top_left(x1, y1, x2, y2);
  const bool tl1 = top_left(x2, y2, x0, y0);
  const bool tl2 = top_left(x0, y0, x1, y1);

  const int u_min = std::max(0, static_cast<int>(std::ceil(std::min({x0, x1, x2}))));
  const int u_max = std::min(width_ - 1, static_cast<int>(std::floor(std::max({x0, x1, x2}))));
  const int v_min = std::max(0, static_cast<int>(std::ceil(std::min({y0, y1, y2}))));
  const int v_max = std::min(height_ - 1, static_cast<int>(std::floor(std::max({y0, y1, y2}))));

  for (int v = v_min; v <= v_max; ++v) {
    for (int u = u_min; u <= u_max; ++u) {
      const double px = u, py = v;
      const double e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
      const double e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2);
      const double e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
      if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) continue;
      if ((e0 == 0.0 && !tl0) || (e1 == 0.0 && !tl1) || (e2 == 0.0 && !tl2)) continue;
      const double w0 = e0 / area, w1 = e1 / area, w2 = e2 / area;
      const double z = 1.0 / (w0 * iz0 + w1 * iz1 + w2 * iz2);
      const std::size_t idx = index(u, v);
      if (z < depth_[idx]) {
        depth_[idx] = z;
        label_[idx] = label;
        face_[idx] = face;
      }
    }
  }
}

}  // namespace dtt
