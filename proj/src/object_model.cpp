#include "dtt/object_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "dtt/error.hpp"
#include "dtt/random.hpp"

namespace dtt {

ObjectModel ObjectModel::build(std::string id, std::vector<Vec3> vertices,
                               std::vector<Eigen::Vector3i> triangles,
                               std::vector<Vec3> vertex_colors,
                               std::vector<Part> parts, int sample_count) {
  if (id.empty()) throw InputError("object model needs an id");
  if (vertices.empty() || triangles.empty()) {
    throw InputError("object model '" + id + "' has no geometry");
  }
  if (sample_count < 1) throw InputError("sample count must be positive");
  if (!vertex_colors.empty() && vertex_colors.size() != vertices.size()) {
    throw InputError("vertex color count does not match vertex count");
  }
  const int n_vertices = static_cast<int>(vertices.size());
  for (const auto &v : vertices) {
    if (!v.allFinite()) throw InputError("non-finite vertex in '" + id + "'");
  }
  for (const auto &tri : triangles) {
    for (int k = 0; k < 3; ++k) {
      if (tri[k] < 0 || tri[k] >= n_vertices) {
        throw InputError("triangle index out of range in '" + id + "'");
      }
    }
  }

  ObjectModel m;
  m.vertex_part_.assign(vertices.size(), -1);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Joint &j = parts[p].joint;
    if (!(j.axis.norm() > 0.0)) {
      throw InputError("part '" + parts[p].name + "' has a zero joint axis");
    }
    if (j.min_angle > j.max_angle) {
      throw InputError("part '" + parts[p].name + "' has an empty angle range");
    }
    for (int v : parts[p].vertices) {
      if (v < 0 || v >= n_vertices) {
        throw InputError("part '" + parts[p].name + "' vertex out of range");
      }
      if (m.vertex_part_[v] != -1) {
        throw InputError("part vertex subsets overlap at vertex " +
                         std::to_string(v));
      }
      m.vertex_part_[v] = static_cast<int>(p);
    }
  }

  m.id_ = std::move(id);
  m.vertices_ = std::move(vertices);
  m.triangles_ = std::move(triangles);
  m.vertex_colors_ = std::move(vertex_colors);
  m.parts_ = std::move(parts);

  Eigen::Vector3d lo = m.vertices_.front(), hi = m.vertices_.front();
  for (const auto &v : m.vertices_) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  m.center_ = 0.5 * (lo + hi);

  // Area-weighted triangle choice, uniform barycentric point.
  std::vector<double> cumulative(m.triangles_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m.triangles_.size(); ++i) {
    const auto &t = m.triangles_[i];
    const Vec3 &a = m.vertices_[t[0]], &b = m.vertices_[t[1]], &c = m.vertices_[t[2]];
    total += 0.5 * (b - a).cross(c - a).norm();
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw InputError("mesh '" + m.id_ + "' has zero area");

  Rng rng(kSurfaceSampleSeed);
  m.surface_samples_.reserve(sample_count);
  m.sample_part_.reserve(sample_count);
  for (int s = 0; s < sample_count; ++s) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto &t = m.triangles_[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3 &a = m.vertices_[t[0]], &b = m.vertices_[t[1]], &c = m.vertices_[t[2]];
    m.surface_samples_.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    const int owner = m.vertex_part_[t[0]];
    const bool whole = owner == m.vertex_part_[t[1]] && owner == m.vertex_part_[t[2]];
    m.sample_part_.push_back(whole ? owner : -1);
  }

  double best = 0.0;
  const auto &pts = m.surface_samples_;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      best = std::max(best, (pts[i] - pts[j]).squaredNorm());
    }
  }
  m.diameter_ = std::sqrt(best);
  if (!(m.diameter_ > 0.0)) throw InputError("mesh '" + m.id_ + "' has zero diameter");
  return m;
}

std::vector<double> ObjectModel::joint_vector(const JointAngles &joints) const {
  std::vector<double> angles(parts_.size(), 0.0);
  for (const auto &[name, angle] : joints) {
    auto it = std::find_if(parts_.begin(), parts_.end(),
                           [&](const Part &p) { return p.name == name; });
    if (it == parts_.end()) {
      throw InputError("model '" + id_ + "' has no part named '" + name + "'");
    }
    if (!(angle >= it->joint.min_angle && angle <= it->joint.max_angle)) {
      throw InputError("joint angle " + std::to_string(angle) + " for part '" +
                       name + "' outside [" + std::to_string(it->joint.min_angle) +
                       ", " + std::to_string(it->joint.max_angle) + "]");
    }
    angles[static_cast<std::size_t>(it - parts_.begin())] = angle;
  }
  return angles;
}

Pose joint_transform(const Joint &joint, double angle) {
  Pose rot = Pose::from_axis_angle(joint.axis, angle);
  rot.translation = joint.pivot - rot.rotation * joint.pivot;
  return rot;
}

std::vector<Vec3> ObjectModel::articulate(const std::vector<Vec3> &points,
                                          const std::vector<int> &owner,
                                          const JointAngles &joints) const {
  const std::vector<double> angles = joint_vector(joints);
  std::vector<Pose> moves;
  moves.reserve(parts_.size());
  for (std::size_t p = 0; p < parts_.size(); ++p) {
    moves.push_back(joint_transform(parts_[p].joint, angles[p]));
  }
  std::vector<Vec3> out = points;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int p = owner[i];
    if (p >= 0 && angles[p] != 0.0) out[i] = moves[p].apply(out[i]);
  }
  return out;
}

std::vector<Vec3> ObjectModel::posed_vertices(const JointAngles &joints) const {
  return articulate(vertices_, vertex_part_, joints);
}

std::vector<Vec3> ObjectModel::posed_samples(const JointAngles &joints) const {
  return articulate(surface_samples_, sample_part_, joints);
}

namespace mesh {

int Mesh::append(const Mesh &other) {
  const int base = static_cast<int>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
  for (const auto &t : other.triangles) {
    triangles.push_back(t + Eigen::Vector3i::Constant(base));
  }
  return base;
}

Mesh box(const Vec3 &lo, const Vec3 &hi, const Vec3 &color) {
  Mesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                            (i & 4) ? hi.z() : lo.z());
    m.colors.push_back(color);
  }
  // Outward-facing (counter-clockwise seen from outside).
  const int faces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto &f : faces) {
    m.triangles.emplace_back(f[0], f[1], f[2]);
    m.triangles.emplace_back(f[0], f[2], f[3]);
  }
  return m;
}

Mesh cylinder(const Vec3 &center, const Vec3 &axis, double radius,
              double length, int segments, const Vec3 &color) {
  Mesh m;
  const Vec3 a = axis.normalized();
  const Vec3 u = a.unitOrthogonal();
  const Vec3 w = a.cross(u);
  const Vec3 bottom = center - 0.5 * length * a;
  const Vec3 top = center + 0.5 * length * a;
  for (int s = 0; s < segments; ++s) {
    const double phi = 2.0 * std::numbers::pi * s / segments;
    const Vec3 r = radius * (std::cos(phi) * u + std::sin(phi) * w);
    m.vertices.push_back(bottom + r);
    m.vertices.push_back(top + r);
  }
  const int c0 = static_cast<int>(m.vertices.size());
  m.vertices.push_back(bottom);
  m.vertices.push_back(top);
  m.colors.assign(m.vertices.size(), color);
  for (int s = 0; s < segments; ++s) {
    const int b0 = 2 * s, t0 = 2 * s + 1;
    const int b1 = 2 * ((s + 1) % segments), t1 = b1 + 1;
    m.triangles.emplace_back(b0, b1, t1);
    m.triangles.emplace_back(b0, t1, t0);
    m.triangles.emplace_back(c0, b1, b0);
    m.triangles.emplace_back(c0 + 1, t0, t1);
  }
  return m;
}

Mesh icosphere(const Vec3 &center, double radius, int subdivisions,
               const Vec3 &color) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto &p : v) p.normalize();
  std::vector<Eigen::Vector3i> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdivisions; ++level) {
    std::unordered_map<long long, int> midpoint;
    auto mid = [&](int a, int b) {
      const long long key = static_cast<long long>(std::min(a, b)) * 1000003LL + std::max(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(f.size() * 4);
    for (const auto &tri : f) {
      const int ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
      next.emplace_back(tri[0], ab, ca);
      next.emplace_back(tri[1], bc, ab);
      next.emplace_back(tri[2], ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    f = std::move(next);
  }
  Mesh m;
  for (const auto &p : v) m.vertices.push_back(center + radius * p);
  m.triangles = std::move(f);
  m.colors.assign(m.vertices.size(), color);
  return m;
}

}  // namespace mesh

ObjectModel make_rover(int sample_count) {
  // Model frame: x forward, y left, z up, origin on the ground plane.
  const Vec3 body_color(0.85, 0.45, 0.10);
  const Vec3 wheel_color(0.15, 0.15, 0.15);
  const Vec3 mast_color(0.60, 0.60, 0.65);

  mesh::Mesh rover = mesh::box({-0.20, -0.13, 0.08}, {0.20, 0.13, 0.18}, body_color);
  for (double x : {-0.15, 0.15}) {
    for (double y : {-0.19, 0.19}) {
      rover.append(mesh::cylinder({x, y, 0.065}, Vec3::UnitY(), 0.065, 0.06, 24,
                                  wheel_color));
    }
  }

  mesh::Mesh mast = mesh::box({0.10, -0.02, 0.18}, {0.14, 0.02, 0.36}, mast_color);
  mast.append(mesh::box({0.09, -0.05, 0.36}, {0.16, 0.05, 0.41}, wheel_color));
  mesh::Mesh arm = mesh::box({-0.19, -0.015, 0.18}, {-0.04, 0.015, 0.21}, mast_color);
  arm.append(mesh::box({-0.21, -0.03, 0.18}, {-0.17, 0.03, 0.24}, body_color));

  Part mast_part;
  mast_part.name = "mast";
  mast_part.joint.axis = Vec3::UnitY();
  mast_part.joint.pivot = Vec3(0.12, 0.0, 0.18);
  mast_part.joint.min_angle = -0.6;
  mast_part.joint.max_angle = 0.6;
  const int mast_base = rover.append(mast);
  for (int i = 0; i < static_cast<int>(mast.vertices.size()); ++i) {
    mast_part.vertices.push_back(mast_base + i);
  }

  Part arm_part;
  arm_part.name = "arm";
  arm_part.joint.axis = Vec3::UnitZ();
  arm_part.joint.pivot = Vec3(-0.115, 0.0, 0.18);
  arm_part.joint.min_angle = -1.2;
  arm_part.joint.max_angle = 1.2;
  const int arm_base = rover.append(arm);
  for (int i = 0; i < static_cast<int>(arm.vertices.size()); ++i) {
    arm_part.vertices.push_back(arm_base + i);
  }

  return ObjectModel::build("rover", std::move(rover.vertices),
                            std::move(rover.triangles), std::move(rover.colors),
                            {mast_part, arm_part}, sample_count);
}

}  // namespace dtt
