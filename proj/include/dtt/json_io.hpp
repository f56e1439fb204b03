#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "dtt/geometry.hpp"

namespace dtt {

using Json = nlohmann::json;

// {"q": [w, x, y, z], "t": [x, y, z]}
Json pose_to_json(const Pose &pose);
Pose pose_from_json(const Json &j);

Json intrinsics_to_json(const CameraIntrinsics &k);
CameraIntrinsics intrinsics_from_json(const Json &j);

Vec3 vec3_from_json(const Json &j, const char *what);

// Throws IoError when unreadable and InputError when malformed.
Json read_json(const std::filesystem::path &path);

// Canonical text: two-space indent, trailing newline.
std::string dump_json(const Json &j);

// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path &path, const std::string &bytes);
void write_json_atomic(const std::filesystem::path &path, const Json &j);

}  // namespace dtt
