#include <doctest.h>

#include <fstream>
#include <numbers>

#include "dtt/error.hpp"
#include "dtt/image_io.hpp"
#include "dtt/object_model.hpp"
#include "dtt/ply_io.hpp"
#include "dtt/scene.hpp"
#include "support.hpp"

using namespace dtt;
using dtt::test::point_triangle_distance;
using dtt::test::random_points;
using dtt::test::TempDir;

namespace {

// Unit square in the z=0 plane plus a small flap, two triangles each.
ObjectModel hinged_square(std::vector<Part> parts) {
  std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                         {2, 0, 0}, {3, 0, 0}, {3, 1, 0}, {2, 1, 0}};
  std::vector<Eigen::Vector3i> t = {{0, 1, 2}, {0, 2, 3}, {4, 5, 6}, {4, 6, 7}};
  return ObjectModel::build("square", v, t, {}, std::move(parts), 256);
}

Part flap_part(double lo = -1.0, double hi = 1.0) {
  Part p;
  p.name = "flap";
  p.vertices = {4, 5, 6, 7};
  p.joint.axis = Vec3::UnitZ();
  p.joint.pivot = Vec3::Zero();
  p.joint.min_angle = lo;
  p.joint.max_angle = hi;
  return p;
}

double distance_to_mesh(const ObjectModel &m, const std::vector<Vec3> &verts, const Vec3 &p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto &t : m.triangles()) {
    best = std::min(best, point_triangle_distance(p, verts[t[0]], verts[t[1]], verts[t[2]]));
  }
  return best;
}

}  // namespace

TEST_CASE("surface samples lie on the mesh and follow area") {
  // Big triangle has 9x the area of the small one.
  const std::vector<Vec3> v = {{0, 0, 0}, {3, 0, 0}, {0, 3, 0}, {5, 0, 0}, {6, 0, 0}, {5, 1, 0}};
  const std::vector<Eigen::Vector3i> t = {{0, 1, 2}, {3, 4, 5}};
  const ObjectModel m = ObjectModel::build("tri", v, t, {}, {}, 20000);
  REQUIRE(m.surface_samples().size() == 20000);
  int on_small = 0;
  for (const auto &s : m.surface_samples()) {
    CHECK(distance_to_mesh(m, m.vertices(), s) < 1e-12);
    if (s.x() >= 5.0 - 1e-12 && s.y() <= 1.0 + 1e-12 && s.x() + s.y() <= 6.0 + 1e-12 &&
        point_triangle_distance(s, v[3], v[4], v[5]) < 1e-12) {
      ++on_small;
    }
  }
  // Expected 2000, binomial sd ~42.
  CHECK(std::abs(on_small - 2000) < 200);
}

TEST_CASE("sampling is reproducible and the default count is 4096") {
  const ObjectModel a = make_rover();
  const ObjectModel b = make_rover();
  CHECK(a.surface_samples().size() == kDefaultSurfaceSamples);
  CHECK(a.surface_samples() == b.surface_samples());
}

TEST_CASE("diameter is the largest sample distance") {
  const ObjectModel m = make_rover(400);
  double best = 0.0;
  const auto &s = m.surface_samples();
  for (const auto &p : s)
    for (const auto &q : s) best = std::max(best, (p - q).norm());
  CHECK(m.diameter() == best);
  // Bounded by the vertex hull.
  double hull = 0.0;
  for (const auto &p : m.vertices())
    for (const auto &q : m.vertices()) hull = std::max(hull, (p - q).norm());
  CHECK(m.diameter() <= hull + 1e-12);
  CHECK(m.diameter() > 0.5 * hull);
}

TEST_CASE("model validation") {
  const std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK_THROWS_AS(ObjectModel::build("x", v, {{0, 1, 3}}), InputError);
  CHECK_THROWS_AS(ObjectModel::build("x", v, {{0, 1, -1}}), InputError);
  CHECK_THROWS_AS(ObjectModel::build("x", {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}, {{0, 1, 2}}),
                  InputError);
  CHECK_THROWS_AS(ObjectModel::build("", v, {{0, 1, 2}}), InputError);
  CHECK_THROWS_AS(ObjectModel::build("x", v, {{0, 1, 2}}, {{1, 1, 1}}), InputError);

  Part a = flap_part();
  Part b = flap_part();
  b.name = "other";
  b.vertices = {7};
  CHECK_THROWS_AS(hinged_square({a, b}), InputError);
  Part empty_range = flap_part(0.5, 0.4);
  CHECK_THROWS_AS(hinged_square({empty_range}), InputError);
  Part no_axis = flap_part();
  no_axis.joint.axis = Vec3::Zero();
  CHECK_THROWS_AS(hinged_square({no_axis}), InputError);
}

TEST_CASE("articulation examples") {
  const ObjectModel m = hinged_square({flap_part(-2.0, 2.0)});
  CHECK(m.posed_vertices({}) == m.vertices());
  CHECK(m.posed_vertices({{"flap", 0.0}}) == m.vertices());

  const auto posed = m.posed_vertices({{"flap", std::numbers::pi / 2}});
  // (3,0,0) swings to (0,3,0); the base square does not move.
  CHECK((posed[5] - Vec3(0, 3, 0)).norm() < 1e-12);
  for (int i = 0; i < 4; ++i) CHECK(posed[i] == m.vertices()[i]);

  Part unit = flap_part(-2.0, 2.0);
  const std::vector<Vec3> v = {{0, 0, 5}, {0.5, 0, 5}, {0, 0.5, 5}, {1, 0, 0}, {1, 0.1, 0}, {1, 0, 0.1}};
  unit.vertices = {3, 4, 5};
  const ObjectModel single =
      ObjectModel::build("one", v, {{0, 1, 2}, {3, 4, 5}}, {}, {unit}, 64);
  CHECK((single.posed_vertices({{"flap", std::numbers::pi / 2}})[3] - Vec3(0, 1, 0)).norm() <
        1e-12);
}

TEST_CASE("joint range boundary is inclusive") {
  const ObjectModel m = hinged_square({flap_part(-0.5, 0.7)});
  CHECK_NOTHROW(m.posed_vertices({{"flap", 0.7}}));
  CHECK_NOTHROW(m.posed_vertices({{"flap", -0.5}}));
  CHECK_THROWS_AS(m.posed_vertices({{"flap", std::nextafter(0.7, 1.0)}}), InputError);
  CHECK_THROWS_AS(m.posed_vertices({{"flap", 0.7 + 1e-9}}), InputError);
  CHECK_THROWS_AS(m.posed_vertices({{"flap", -0.5 - 1e-9}}), InputError);
  CHECK_THROWS_AS(m.posed_vertices({{"nope", 0.0}}), InputError);
}

TEST_CASE("articulation keeps every part rigid") {
  const ObjectModel rover = make_rover(1000);
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    JointAngles joints;
    for (const Part &p : rover.parts()) {
      joints[p.name] = rng.uniform(p.joint.min_angle, p.joint.max_angle);
    }
    const auto posed = rover.posed_vertices(joints);
    const auto &owner = rover.vertex_part();
    for (std::size_t i = 0; i < posed.size(); i += 3) {
      for (std::size_t j = i + 1; j < posed.size(); j += 7) {
        if (owner[i] != owner[j]) continue;
        const double before = (rover.vertices()[i] - rover.vertices()[j]).norm();
        CHECK(std::abs((posed[i] - posed[j]).norm() - before) < 1e-9);
      }
    }
    // Posed samples stay on the posed mesh.
    const auto samples = rover.posed_samples(joints);
    for (std::size_t s = 0; s < samples.size(); s += 50) {
      CHECK(distance_to_mesh(rover, posed, samples[s]) < 1e-9);
    }
  }
}

TEST_CASE("parts survive a json round trip") {
  const ObjectModel rover = make_rover(64);
  const auto back = parts_from_json(Json::parse(parts_to_json(rover.parts()).dump()));
  REQUIRE(back.size() == rover.parts().size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].name == rover.parts()[i].name);
    CHECK(back[i].vertices == rover.parts()[i].vertices);
    CHECK(back[i].joint.axis == rover.parts()[i].joint.axis);
    CHECK(back[i].joint.pivot == rover.parts()[i].joint.pivot);
    CHECK(back[i].joint.min_angle == rover.parts()[i].joint.min_angle);
    CHECK(back[i].joint.max_angle == rover.parts()[i].joint.max_angle);
  }
}

TEST_CASE("ply round trips in both encodings") {
  TempDir dir;
  const ObjectModel rover = make_rover(64);
  PlyMesh mesh{rover.vertices(), rover.vertex_colors(), rover.triangles()};
  for (auto format : {PlyFormat::kBinaryLittleEndian, PlyFormat::kAscii}) {
    for (auto precision : {PlyPrecision::kFloat, PlyPrecision::kDouble}) {
      const auto path = dir / "m.ply";
      write_ply(path, mesh, format, precision);
      const PlyMesh back = read_ply(path);
      REQUIRE(back.vertices.size() == mesh.vertices.size());
      CHECK(back.triangles == mesh.triangles);
      const double tol = precision == PlyPrecision::kDouble ? 0.0 : 1e-7;
      for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        CHECK((back.vertices[i] - mesh.vertices[i]).cwiseAbs().maxCoeff() <= tol);
        CHECK((back.colors[i] - mesh.colors[i]).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
      }
    }
  }
}

TEST_CASE("ply reader fan-triangulates polygons and skips unknown data") {
  TempDir dir;
  const auto path = dir / "quad.ply";
  std::ofstream(path) << "ply\nformat ascii 1.0\ncomment hand written\n"
                      << "element vertex 4\nproperty float x\nproperty float y\n"
                      << "property float z\nproperty float confidence\n"
                      << "element face 1\nproperty list uchar int vertex_indices\n"
                      << "element extra 1\nproperty int tag\nend_header\n"
                      << "0 0 0 1\n1 0 0 1\n1 1 0 1\n0 1 0 1\n4 0 1 2 3\n7\n";
  const PlyMesh m = read_ply(path);
  CHECK(m.vertices.size() == 4);
  CHECK(m.colors.empty());
  REQUIRE(m.triangles.size() == 2);
  CHECK(m.triangles[0] == Eigen::Vector3i(0, 1, 2));
  CHECK(m.triangles[1] == Eigen::Vector3i(0, 2, 3));
}

TEST_CASE("malformed ply files") {
  TempDir dir;
  CHECK_THROWS_AS(read_ply(dir / "missing.ply"), IoError);
  std::ofstream(dir / "junk.ply") << "not a ply\n";
  CHECK_THROWS_AS(read_ply(dir / "junk.ply"), InputError);
  std::ofstream(dir / "short.ply") << "ply\nformat ascii 1.0\nelement vertex 3\n"
                                   << "property float x\nproperty float y\nproperty float z\n"
                                   << "end_header\n0 0 0\n1 1\n";
  CHECK_THROWS_AS(read_ply(dir / "short.ply"), IoError);
  std::ofstream(dir / "be.ply") << "ply\nformat binary_big_endian 1.0\nend_header\n";
  CHECK_THROWS_AS(read_ply(dir / "be.ply"), InputError);
}

TEST_CASE("point cloud ply export keeps points and colors") {
  TempDir dir;
  Rng rng(22);
  PointCloud c;
  c.points = random_points(rng, 30);
  c.colors.assign(30, Vec3(1.0, 0.0, 0.5));
  write_ply(dir / "c.ply", c, PlyFormat::kAscii);
  const PlyMesh back = read_ply(dir / "c.ply");
  REQUIRE(back.vertices.size() == 30);
  CHECK(back.triangles.empty());
  CHECK((back.colors[3] - Vec3(1.0, 0.0, 128.0 / 255.0)).norm() < 1e-12);
}

TEST_CASE("png round trips are exact and deterministic") {
  TempDir dir;
  Rng rng(23);
  RgbImage rgb{7, 5, std::vector<std::uint8_t>(7 * 5 * 3)};
  for (auto &b : rgb.data) b = static_cast<std::uint8_t>(rng.index(256));
  MaskImage mask{7, 5, std::vector<std::uint8_t>(35)};
  for (auto &b : mask.data) b = static_cast<std::uint8_t>(rng.index(4));
  DepthFrame depth{7, 5, std::vector<std::uint16_t>(35)};
  for (auto &d : depth.raw) d = static_cast<std::uint16_t>(rng.index(65536));

  write_png(dir / "c.png", rgb);
  write_png(dir / "m.png", mask);
  write_png(dir / "d.png", depth);
  CHECK(read_rgb_png(dir / "c.png").data == rgb.data);
  CHECK(read_mask_png(dir / "m.png").data == mask.data);
  const DepthFrame d = read_depth_png(dir / "d.png");
  CHECK(d.width == 7);
  CHECK(d.height == 5);
  CHECK(d.raw == depth.raw);

  const std::string first = dtt::test::read_file(dir / "d.png");
  write_png(dir / "d.png", depth);
  CHECK(dtt::test::read_file(dir / "d.png") == first);
  // No temporaries left behind.
  int files = 0;
  for ([[maybe_unused]] const auto &e : std::filesystem::directory_iterator(dir.path())) ++files;
  CHECK(files == 3);
}

TEST_CASE("png readers reject the wrong layout") {
  TempDir dir;
  write_png(dir / "m.png", MaskImage{2, 2, {1, 2, 3, 4}});
  CHECK_THROWS_AS(read_depth_png(dir / "m.png"), InputError);
  CHECK_THROWS_AS(read_rgb_png(dir / "m.png"), InputError);
  CHECK_THROWS_AS(read_mask_png(dir / "none.png"), IoError);
  std::ofstream(dir / "bad.png") << "garbage";
  CHECK_THROWS_AS(read_mask_png(dir / "bad.png"), IoError);
  CHECK_THROWS_AS(write_png(dir / "x.png", MaskImage{3, 3, {1}}), InputError);
}
