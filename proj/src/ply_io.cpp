#include "dtt/ply_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "dtt/error.hpp"

namespace dtt {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY support assumes a little-endian host");

enum class Scalar { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

Scalar parse_scalar(const std::string &name) {
  if (name == "char" || name == "int8") return Scalar::kInt8;
  if (name == "uchar" || name == "uint8") return Scalar::kUint8;
  if (name == "short" || name == "int16") return Scalar::kInt16;
  if (name == "ushort" || name == "uint16") return Scalar::kUint16;
  if (name == "int" || name == "int32") return Scalar::kInt32;
  if (name == "uint" || name == "uint32") return Scalar::kUint32;
  if (name == "float" || name == "float32") return Scalar::kFloat32;
  if (name == "double" || name == "float64") return Scalar::kFloat64;
  throw InputError("unknown PLY scalar type '" + name + "'");
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kInt8: case Scalar::kUint8: return 1;
    case Scalar::kInt16: case Scalar::kUint16: return 2;
    case Scalar::kInt32: case Scalar::kUint32: case Scalar::kFloat32: return 4;
    case Scalar::kFloat64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::kFloat32;
  bool is_list = false;
  Scalar count_type = Scalar::kUint8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

class Reader {
 public:
  Reader(std::istream &in, bool binary) : in_{in}, binary_{binary} {}

  double read(Scalar type) {
    if (!binary_) {
      double v;
      if (!(in_ >> v)) throw IoError("truncated ASCII PLY body");
      return v;
    }
    char buf[8];
    if (!in_.read(buf, static_cast<std::streamsize>(scalar_size(type)))) {
      throw IoError("truncated binary PLY body");
    }
    switch (type) {
      case Scalar::kInt8: return static_cast<double>(static_cast<std::int8_t>(buf[0]));
      case Scalar::kUint8: return static_cast<double>(static_cast<std::uint8_t>(buf[0]));
      case Scalar::kInt16: return load<std::int16_t>(buf);
      case Scalar::kUint16: return load<std::uint16_t>(buf);
      case Scalar::kInt32: return load<std::int32_t>(buf);
      case Scalar::kUint32: return load<std::uint32_t>(buf);
      case Scalar::kFloat32: return load<float>(buf);
      case Scalar::kFloat64: return load<double>(buf);
    }
    return 0.0;
  }

 private:
  template <typename T>
  static double load(const char *buf) {
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return static_cast<double>(v);
  }

  std::istream &in_;
  bool binary_;
};

template <typename T>
void put(std::ostream &out, T value) {
  out.write(reinterpret_cast<const char *>(&value), sizeof(T));
}

}  // namespace

PlyMesh read_ply(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");

  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) throw InputError("'" + path.string() + "' is not a PLY file");

  bool binary = false;
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        throw InputError("unsupported PLY format '" + fmt + "'");
      }
    } else if (key == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(std::move(e));
    } else if (key == "property") {
      if (elements.empty()) throw InputError("PLY property before any element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_scalar(count_type);
        p.type = parse_scalar(item_type);
      } else {
        p.type = parse_scalar(type);
        ls >> p.name;
      }
      elements.back().properties.push_back(std::move(p));
    } else if (key == "end_header") {
      break;
    }
  }
  if (!in) throw IoError("PLY header of '" + path.string() + "' is truncated");

  PlyMesh mesh;
  Reader reader(in, binary);
  for (const Element &e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 xyz = Vec3::Zero();
      Vec3 rgb = Vec3::Zero();
      bool has_rgb = false;
      for (const Property &p : e.properties) {
        if (p.is_list) {
          const auto n = static_cast<std::size_t>(reader.read(p.count_type));
          std::vector<int> idx(n);
          for (auto &v : idx) v = static_cast<int>(reader.read(p.type));
          if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) {
            for (std::size_t k = 1; k + 1 < n; ++k) {
              mesh.triangles.emplace_back(idx[0], idx[k], idx[k + 1]);
            }
          }
          continue;
        }
        const double v = reader.read(p.type);
        if (!is_vertex) continue;
        if (p.name == "x") xyz.x() = v;
        else if (p.name == "y") xyz.y() = v;
        else if (p.name == "z") xyz.z() = v;
        else if (p.name == "red") { rgb.x() = v; has_rgb = true; }
        else if (p.name == "green") rgb.y() = v;
        else if (p.name == "blue") rgb.z() = v;
      }
      if (is_vertex) {
        mesh.vertices.push_back(xyz);
        if (has_rgb) mesh.colors.push_back(rgb / 255.0);
      }
    }
  }
  if (!mesh.colors.empty() && mesh.colors.size() != mesh.vertices.size()) {
    mesh.colors.clear();
  }
  return mesh;
}

void write_ply(const std::filesystem::path &path, const PlyMesh &mesh,
               PlyFormat format, PlyPrecision precision) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const bool binary = format == PlyFormat::kBinaryLittleEndian;
  const bool dbl = precision == PlyPrecision::kDouble;
  const bool colored = !mesh.colors.empty();
  if (colored && mesh.colors.size() != mesh.vertices.size()) {
    throw InputError("vertex color count does not match vertex count");
  }

  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n";
  for (const char *axis : {"x", "y", "z"}) {
    out << "property " << (dbl ? "double " : "float ") << axis << "\n";
  }
  if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (!mesh.triangles.empty()) {
    out << "element face " << mesh.triangles.size() << "\n"
        << "property list uchar int vertex_indices\n";
  }
  out << "end_header\n";

  auto to_byte = [](double c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  if (!binary) out.precision(dbl ? 17 : 9);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3 &v = mesh.vertices[i];
    if (binary) {
      for (int k = 0; k < 3; ++k) {
        if (dbl) put<double>(out, v[k]); else put<float>(out, static_cast<float>(v[k]));
      }
      if (colored) {
        for (int k = 0; k < 3; ++k) put<std::uint8_t>(out, to_byte(mesh.colors[i][k]));
      }
    } else {
      out << v.x() << " " << v.y() << " " << v.z();
      if (colored) {
        for (int k = 0; k < 3; ++k) out << " " << int{to_byte(mesh.colors[i][k])};
      }
      out << "\n";
    }
  }
  for (const auto &t : mesh.triangles) {
    if (binary) {
      put<std::uint8_t>(out, 3);
      for (int k = 0; k < 3; ++k) put<std::int32_t>(out, t[k]);
    } else {
      out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_ply(const std::filesystem::path &path, const PointCloud &cloud,
               PlyFormat format) {
  PlyMesh mesh;
  mesh.vertices = cloud.points;
  mesh.colors = cloud.colors;
  write_ply(path, mesh, format, PlyPrecision::kFloat);
}

}  // namespace dtt
