#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dtt/error.hpp"
#include "dtt/json_io.hpp"

namespace dtt {

Vec3 vec3_from_json(const Json &j, const char *what) {
  if (!j.is_array() || j.size() != 3) {
    throw InputError(std::string(what) + " must be an array of 3 numbers");
  }
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) throw InputError(std::string(what) + " must hold numbers");
    v[k] = j[k].get<double>();
  }
  if (!v.allFinite()) throw InputError(std::string(what) + " must be finite");
  return v;
}

Json pose_to_json(const Pose &pose) {
  const Quat q = pose.quaternion();
  return Json{{"q", {q.w(), q.x(), q.y(), q.z()}},
              {"t", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

Pose pose_from_json(const Json &j) {
  if (!j.is_object() || !j.contains("q") || !j.contains("t")) {
    throw InputError("pose needs \"q\" and \"t\"");
  }
  const Json &q = j.at("q");
  if (!q.is_array() || q.size() != 4) throw InputError("\"q\" must be [w, x, y, z]");
  double c[4];
  for (int k = 0; k < 4; ++k) {
    if (!q[k].is_number()) throw InputError("\"q\" must hold numbers");
    c[k] = q[k].get<double>();
  }
  return Pose::from_quaternion(Quat(c[0], c[1], c[2], c[3]), vec3_from_json(j.at("t"), "\"t\""));
}

Json intrinsics_to_json(const CameraIntrinsics &k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
              {"width", k.width}, {"height", k.height}, {"depth_scale", k.depth_scale}};
}

CameraIntrinsics intrinsics_from_json(const Json &j) {
  CameraIntrinsics k;
  try {
    k.fx = j.at("fx").get<double>();
    k.fy = j.at("fy").get<double>();
    k.cx = j.at("cx").get<double>();
    k.cy = j.at("cy").get<double>();
    k.width = j.at("width").get<int>();
    k.height = j.at("height").get<int>();
    k.depth_scale = j.at("depth_scale").get<double>();
  } catch (const nlohmann::json::exception &e) {
    throw InputError(std::string("intrinsics: ") + e.what());
  }
  k.validate();
  return k;
}

Json read_json(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error &e) {
    throw InputError("malformed JSON in '" + path.string() + "': " + e.what());
  }
}

std::string dump_json(const Json &j) { return j.dump(2) + "\n"; }

void write_file_atomic(const std::filesystem::path &path, const std::string &bytes) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw IoError("cannot write '" + tmp.string() + "': " + std::strerror(errno));
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw IoError("write to '" + tmp.string() + "' failed");
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename onto '" + path.string() + "'");
  }
}

void write_json_atomic(const std::filesystem::path &path, const Json &j) {
  write_file_atomic(path, dump_json(j));
}

}  // namespace dtt
