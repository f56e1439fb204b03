#pragma once

#include <map>
#include <string>
#include <vector>

#include "dtt/geometry.hpp"

namespace dtt {

struct Joint {
  Vec3 axis = Vec3::UnitZ();
  Vec3 pivot = Vec3::Zero();
  double min_angle = 0.0;  // radians, inclusive
  double max_angle = 0.0;
};

// A movable part: a vertex subset rigidly rotated about its joint.
struct Part {
  std::string name;
  std::vector<int> vertices;
  Joint joint;
};

// Per-part joint angles keyed by part name; missing parts default to 0.
using JointAngles = std::map<std::string, double>;

inline constexpr int kDefaultSurfaceSamples = 4096;
inline constexpr std::uint64_t kSurfaceSampleSeed = 0x5eedULL;

class ObjectModel {
 public:
  ObjectModel() = default;

  // Validates the mesh, samples the surface (area weighted, fixed seed) and
  // computes the diameter. Throws InputError on bad indices, overlapping
  // parts, or a degenerate (zero-area) mesh.
  static ObjectModel build(std::string id, std::vector<Vec3> vertices,
                           std::vector<Eigen::Vector3i> triangles,
                           std::vector<Vec3> vertex_colors = {},
                           std::vector<Part> parts = {},
                           int sample_count = kDefaultSurfaceSamples);

  const std::string &id() const { return id_; }
  const std::vector<Vec3> &vertices() const { return vertices_; }
  const std::vector<Eigen::Vector3i> &triangles() const { return triangles_; }
  const std::vector<Vec3> &vertex_colors() const { return vertex_colors_; }
  const std::vector<Vec3> &surface_samples() const { return surface_samples_; }
  const std::vector<Part> &parts() const { return parts_; }
  double diameter() const { return diameter_; }

  // Bounding-box center of the rest vertices, model frame.
  Vec3 center() const { return center_; }

  bool articulated() const { return !parts_.empty(); }

  // Part index owning each vertex / surface sample, -1 for the base body.
  const std::vector<int> &vertex_part() const { return vertex_part_; }
  const std::vector<int> &sample_part() const { return sample_part_; }

  // Joint angles in part order. Throws InputError for unknown part names or
  // angles outside a joint's range.
  std::vector<double> joint_vector(const JointAngles &joints) const;

  // Rest vertices with every part rotated about its joint.
  std::vector<Vec3> posed_vertices(const JointAngles &joints) const;
  // Surface samples moved the same way.
  std::vector<Vec3> posed_samples(const JointAngles &joints) const;

 private:
  std::vector<Vec3> articulate(const std::vector<Vec3> &points,
                               const std::vector<int> &owner,
                               const JointAngles &joints) const;

  std::string id_;
  std::vector<Vec3> vertices_;
  std::vector<Eigen::Vector3i> triangles_;
  std::vector<Vec3> vertex_colors_;
  std::vector<Part> parts_;
  std::vector<int> vertex_part_;
  std::vector<Vec3> surface_samples_;
  std::vector<int> sample_part_;
  double diameter_ = 0.0;
  Vec3 center_ = Vec3::Zero();
};

// Rigid rotation of one part about its joint axis through its pivot.
Pose joint_transform(const Joint &joint, double angle);

// Primitive meshes used by the synthetic generator and the tests.
namespace mesh {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<Vec3> colors;

  // Appends another mesh; returns the index of its first vertex.
  int append(const Mesh &other);
};

Mesh box(const Vec3 &min_corner, const Vec3 &max_corner, const Vec3 &color);
// Cylinder along axis through center, closed with caps.
Mesh cylinder(const Vec3 &center, const Vec3 &axis, double radius,
              double length, int segments, const Vec3 &color);
Mesh icosphere(const Vec3 &center, double radius, int subdivisions,
               const Vec3 &color);

}  // namespace mesh

// Procedural four-wheeled rover with a pivoting mast and a camera head.
ObjectModel make_rover(int sample_count = kDefaultSurfaceSamples);

}  // namespace dtt
