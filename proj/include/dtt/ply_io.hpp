#pragma once

#include <filesystem>
#include <vector>

#include "dtt/geometry.hpp"

namespace dtt {

struct PlyMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> colors;  // empty or one per vertex, in [0,1]
  std::vector<Eigen::Vector3i> triangles;
};

enum class PlyFormat { kBinaryLittleEndian, kAscii };
enum class PlyPrecision { kFloat, kDouble };

// Reads ASCII or little-endian binary PLY. Polygons are fan-triangulated;
// unknown elements and properties are skipped.
PlyMesh read_ply(const std::filesystem::path &path);

void write_ply(const std::filesystem::path &path, const PlyMesh &mesh,
               PlyFormat format = PlyFormat::kBinaryLittleEndian,
               PlyPrecision precision = PlyPrecision::kFloat);

void write_ply(const std::filesystem::path &path, const PointCloud &cloud,
               PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace dtt
