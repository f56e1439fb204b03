#include "dtt/scene.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dtt/error.hpp"
#include "dtt/ply_io.hpp"

namespace dtt {
namespace fs = std::filesystem;

namespace {

constexpr const char *kCommitFile = ".commit.json";
constexpr const char *kStagedSuffix = ".staged";

int sample_count_from(const Json &meta) {
  return meta.value("surface_samples", kDefaultSurfaceSamples);
}

}  // namespace

std::string_view to_string(LabelStatus status) {
  switch (status) {
    case LabelStatus::kSeeded: return "seeded";
    case LabelStatus::kRefined: return "refined";
    case LabelStatus::kPropagated: return "propagated";
    case LabelStatus::kVerified: return "verified";
    case LabelStatus::kRejected: return "rejected";
  }
  return "unknown";
}

LabelStatus parse_status(std::string_view text) {
  for (auto s : {LabelStatus::kSeeded, LabelStatus::kRefined, LabelStatus::kPropagated,
                 LabelStatus::kVerified, LabelStatus::kRejected}) {
    if (to_string(s) == text) return s;
  }
  throw InputError("unknown label status '" + std::string(text) + "'");
}

std::string_view to_string(LabelEvent event) {
  switch (event) {
    case LabelEvent::kEdit: return "edit";
    case LabelEvent::kRefineOk: return "refine";
    case LabelEvent::kRefineFail: return "refine-failure";
    case LabelEvent::kPropagateOk: return "propagate";
    case LabelEvent::kPropagateFail: return "propagate-failure";
    case LabelEvent::kVerify: return "verify";
    case LabelEvent::kReject: return "reject";
  }
  return "unknown";
}

LabelStatus transition(std::optional<LabelStatus> current, LabelEvent event) {
  using S = LabelStatus;
  const auto is = [&](std::initializer_list<S> allowed) {
    if (!current) return false;
    for (S s : allowed) {
      if (*current == s) return true;
    }
    return false;
  };
  switch (event) {
    case LabelEvent::kEdit: return S::kSeeded;
    case LabelEvent::kPropagateOk: return S::kPropagated;
    case LabelEvent::kPropagateFail: return S::kRejected;
    case LabelEvent::kRefineOk:
      if (is({S::kSeeded, S::kRefined})) return S::kRefined;
      break;
    case LabelEvent::kRefineFail:
      if (is({S::kSeeded, S::kRefined})) return S::kRejected;
      break;
    case LabelEvent::kVerify:
      if (is({S::kRefined, S::kPropagated})) return S::kVerified;
      break;
    case LabelEvent::kReject:
      if (is({S::kRefined, S::kPropagated})) return S::kRejected;
      break;
  }
  const std::string from = current ? std::string(to_string(*current)) : "none";
  throw ValidationError("invalid label transition: " + std::string(to_string(event)) +
                        " from status '" + from + "'");
}

bool needs_review(const FrameLabel &label, const ReviewGates &gates) {
  switch (label.status) {
    case LabelStatus::kVerified: return false;
    case LabelStatus::kRejected: return true;
    case LabelStatus::kSeeded: return false;
    case LabelStatus::kRefined:
    case LabelStatus::kPropagated:
      return !(label.inlier_rmse <= gates.rmse_gate) ||
             !(label.inlier_ratio >= gates.inlier_gate);
  }
  return true;
}

Json label_to_json(const FrameLabel &label) {
  Json j = pose_to_json(label.pose);
  Json joints = Json::object();
  for (const auto &[name, angle] : label.joints) joints[name] = angle;
  j["joints"] = joints;
  j["status"] = std::string(to_string(label.status));
  j["inlier_rmse"] = label.inlier_rmse;
  j["inlier_ratio"] = label.inlier_ratio;
  if (!label.error.empty()) j["error"] = label.error;
  return j;
}

FrameLabel label_from_json(const std::string &object_id, const Json &j) {
  FrameLabel label;
  label.object_id = object_id;
  label.pose = pose_from_json(j);
  try {
    if (j.contains("joints")) {
      for (const auto &[name, angle] : j.at("joints").items()) {
        label.joints[name] = angle.get<double>();
      }
    }
    label.status = parse_status(j.value("status", std::string("seeded")));
    label.inlier_rmse = j.value("inlier_rmse", 0.0);
    label.inlier_ratio = j.value("inlier_ratio", 0.0);
    label.error = j.value("error", std::string());
  } catch (const nlohmann::json::exception &e) {
    throw InputError("label for '" + object_id + "': " + e.what());
  }
  return label;
}

std::string frame_stem(int frame) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << frame;
  return os.str();
}

Json parts_to_json(const std::vector<Part> &parts) {
  Json out = Json::array();
  for (const auto &p : parts) {
    out.push_back({{"name", p.name},
                   {"vertices", p.vertices},
                   {"axis", {p.joint.axis.x(), p.joint.axis.y(), p.joint.axis.z()}},
                   {"pivot", {p.joint.pivot.x(), p.joint.pivot.y(), p.joint.pivot.z()}},
                   {"range", {p.joint.min_angle, p.joint.max_angle}}});
  }
  return out;
}

std::vector<Part> parts_from_json(const Json &j) {
  std::vector<Part> parts;
  if (j.is_null()) return parts;
  try {
    for (const auto &e : j) {
      Part p;
      p.name = e.at("name").get<std::string>();
      p.vertices = e.at("vertices").get<std::vector<int>>();
      p.joint.axis = vec3_from_json(e.at("axis"), "part axis");
      p.joint.pivot = vec3_from_json(e.at("pivot"), "part pivot");
      const auto range = e.at("range").get<std::vector<double>>();
      if (range.size() != 2) throw InputError("part range must be [min, max]");
      p.joint.min_angle = range[0];
      p.joint.max_angle = range[1];
      parts.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception &e) {
    throw InputError(std::string("parts: ") + e.what());
  }
  return parts;
}

ObjectModel load_model(const std::string &id, const fs::path &ply,
                       std::vector<Part> parts, int sample_count) {
  PlyMesh mesh = read_ply(ply);
  return ObjectModel::build(id, std::move(mesh.vertices), std::move(mesh.triangles),
                            std::move(mesh.colors), std::move(parts), sample_count);
}

std::function<void(int)> &Scene::save_step_hook() {
  static std::function<void(int)> hook;
  return hook;
}

Scene Scene::in_memory(const CameraIntrinsics &intrinsics,
                       std::vector<SceneObject> objects, int frame_count) {
  intrinsics.validate();
  if (frame_count < 0) throw InputError("frame count must be >= 0");
  Scene s;
  s.intrinsics_ = intrinsics;
  s.objects_ = std::move(objects);
  s.frame_count_ = frame_count;
  for (std::size_t i = 0; i < s.objects_.size(); ++i) {
    auto &o = s.objects_[i];
    if (o.mask_id == 0) o.mask_id = static_cast<int>(i) + 1;
    if (o.mask_id < 1 || o.mask_id > 255) throw InputError("mask ids must be in 1..255");
  }
  return s;
}

Scene Scene::create(const fs::path &root, const CameraIntrinsics &intrinsics,
                    std::vector<SceneObject> objects, int frame_count,
                    const ReviewGates &gates) {
  Scene s = in_memory(intrinsics, std::move(objects), frame_count);
  s.root_ = root;
  s.gates_ = gates;
  for (const char *sub : {"frames", "labels", "models"}) {
    std::error_code ec;
    fs::create_directories(root / sub, ec);
    if (ec) {
      throw IoError("cannot create scene directory '" + (root / sub).string() + "': " +
                    ec.message());
    }
  }

  Json objects_json = Json::array();
  int sample_count = kDefaultSurfaceSamples;
  for (const auto &o : s.objects_) {
    PlyMesh mesh{o.model.vertices(), o.model.vertex_colors(), o.model.triangles()};
    // Doubles keep reloaded geometry bit-identical to what was written.
    write_ply(root / "models" / (o.id + ".ply"), mesh, PlyFormat::kBinaryLittleEndian,
              PlyPrecision::kDouble);
    Json entry = {{"id", o.id}, {"mask_id", o.mask_id}, {"model", "models/" + o.id + ".ply"}};
    if (o.model.articulated()) entry["parts"] = parts_to_json(o.model.parts());
    objects_json.push_back(std::move(entry));
    sample_count = static_cast<int>(o.model.surface_samples().size());
  }
  Json meta = {{"frame_count", frame_count},
               {"objects", objects_json},
               {"extrinsics", nullptr},
               {"review", {{"rmse_gate", gates.rmse_gate}, {"inlier_gate", gates.inlier_gate}}},
               {"surface_samples", sample_count}};
  write_json_atomic(root / "meta.json", meta);
  write_json_atomic(root / "camera_intrinsics.json", intrinsics_to_json(intrinsics));
  return s;
}

Scene Scene::open(const fs::path &root) {
  if (!fs::is_directory(root)) throw IoError("scene directory '" + root.string() + "' not found");
  const Json meta = read_json(root / "meta.json");
  Scene s;
  s.root_ = root;
  s.intrinsics_ = intrinsics_from_json(read_json(root / "camera_intrinsics.json"));
  try {
    s.frame_count_ = meta.at("frame_count").get<int>();
    if (meta.contains("review")) {
      s.gates_.rmse_gate = meta["review"].value("rmse_gate", s.gates_.rmse_gate);
      s.gates_.inlier_gate = meta["review"].value("inlier_gate", s.gates_.inlier_gate);
    }
    const int samples = sample_count_from(meta);
    int index = 0;
    for (const auto &o : meta.at("objects")) {
      SceneObject obj;
      obj.id = o.at("id").get<std::string>();
      obj.mask_id = o.value("mask_id", index + 1);
      const fs::path model_path = root / o.value("model", "models/" + obj.id + ".ply");
      obj.model = load_model(obj.id, model_path, parts_from_json(o.value("parts", Json())),
                             samples);
      s.objects_.push_back(std::move(obj));
      ++index;
    }
    if (meta.contains("extrinsics") && meta["extrinsics"].is_string()) {
      const Json ext = read_json(root / meta["extrinsics"].get<std::string>());
      s.mocap_to_camera_ = pose_from_json(ext.at("mocap_to_camera"));
    }
  } catch (const nlohmann::json::exception &e) {
    throw InputError("meta.json: " + std::string(e.what()));
  }
  s.recover();
  s.load_labels();
  return s;
}

std::string Scene::id() const {
  if (root_.empty()) return "memory";
  fs::path p = root_;
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

const SceneObject &Scene::object(const std::string &id) const {
  for (const auto &o : objects_) {
    if (o.id == id) return o;
  }
  throw InputError("unknown object '" + id + "'");
}

bool Scene::has_object(const std::string &id) const {
  for (const auto &o : objects_) {
    if (o.id == id) return true;
  }
  return false;
}

int Scene::object_index(const std::string &id) const {
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    if (objects_[i].id == id) return static_cast<int>(i);
  }
  throw InputError("unknown object '" + id + "'");
}

void Scene::check_frame(int frame) const {
  if (frame < 0 || frame >= frame_count_) {
    throw InputError("frame " + std::to_string(frame) + " outside [0, " +
                     std::to_string(frame_count_) + ")");
  }
}

fs::path Scene::pose_path(int frame) const { return root_ / "labels" / (frame_stem(frame) + ".pose.json"); }
fs::path Scene::mask_path(int frame) const { return root_ / "labels" / (frame_stem(frame) + ".seg.png"); }
fs::path Scene::depth_path(int frame) const { return root_ / "frames" / (frame_stem(frame) + ".depth.png"); }
fs::path Scene::color_path(int frame) const { return root_ / "frames" / (frame_stem(frame) + ".color.png"); }

DepthFrame Scene::depth(int frame) const {
  check_frame(frame);
  if (auto it = depth_.find(frame); it != depth_.end()) return it->second;
  if (root_.empty()) throw InputError("frame " + std::to_string(frame) + " has no depth");
  return read_depth_png(depth_path(frame));
}

std::optional<RgbImage> Scene::color(int frame) const {
  check_frame(frame);
  if (auto it = color_.find(frame); it != color_.end()) return it->second;
  if (root_.empty() || !fs::exists(color_path(frame))) return std::nullopt;
  return read_rgb_png(color_path(frame));
}

PointCloud Scene::cloud(int frame, int stride) const {
  check_frame(frame);
  if (auto it = cloud_.find(frame); it != cloud_.end()) {
    if (stride <= 1) return it->second;
    PointCloud out;
    for (std::size_t i = 0; i < it->second.size(); i += static_cast<std::size_t>(stride)) {
      out.points.push_back(it->second.points[i]);
      if (it->second.has_colors()) out.colors.push_back(it->second.colors[i]);
      if (it->second.has_pixel_index()) out.pixel_index.push_back(it->second.pixel_index[i]);
    }
    return out;
  }
  const DepthFrame d = depth(frame);
  const std::optional<RgbImage> c = color(frame);
  return backproject(d, intrinsics_, c ? &*c : nullptr, stride);
}

void Scene::set_depth(int frame, DepthFrame depth) {
  check_frame(frame);
  depth_[frame] = std::move(depth);
}

void Scene::set_color(int frame, RgbImage color) {
  check_frame(frame);
  color_[frame] = std::move(color);
}

void Scene::set_cloud(int frame, PointCloud cloud) {
  check_frame(frame);
  cloud.validate();
  cloud_[frame] = std::move(cloud);
}

std::optional<FrameLabel> Scene::label(int frame, const std::string &object_id) const {
  auto f = labels_.find(frame);
  if (f == labels_.end()) return std::nullopt;
  auto o = f->second.find(object_id);
  if (o == f->second.end()) return std::nullopt;
  return o->second;
}

const Scene::FrameLabels *Scene::frame_labels(int frame) const {
  auto f = labels_.find(frame);
  return f == labels_.end() ? nullptr : &f->second;
}

void Scene::put_label(int frame, FrameLabel label) {
  check_frame(frame);
  if (!has_object(label.object_id)) {
    throw InputError("unknown object '" + label.object_id + "'");
  }
  const std::string id = label.object_id;
  labels_[frame][id] = std::move(label);
  dirty_.insert(frame);
}

void Scene::load_labels() {
  const fs::path dir = root_ / "labels";
  if (!fs::is_directory(dir)) return;
  for (int frame = 0; frame < frame_count_; ++frame) {
    const fs::path p = pose_path(frame);
    if (!fs::exists(p)) continue;
    const Json j = read_json(p);
    if (!j.is_object()) throw InputError("'" + p.string() + "' must hold an object");
    FrameLabels &labels = labels_[frame];
    for (const auto &[object_id, record] : j.items()) {
      if (!has_object(object_id)) {
        throw InputError("'" + p.string() + "' labels unknown object '" + object_id + "'");
      }
      labels[object_id] = label_from_json(object_id, record);
    }
  }
}

// Roll an interrupted save forward if its commit record made it to disk,
// otherwise drop the staged files.
void Scene::recover() {
  const fs::path dir = root_ / "labels";
  if (!fs::is_directory(dir)) return;
  const fs::path commit = dir / kCommitFile;
  if (fs::exists(commit)) {
    const Json j = read_json(commit);
    for (const auto &f : j.at("frames")) {
      const int frame = f.get<int>();
      fs::path staged = pose_path(frame);
      staged += kStagedSuffix;
      if (fs::exists(staged)) fs::rename(staged, pose_path(frame));
    }
    fs::remove(commit);
  }
  for (const auto &entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const bool staged = name.size() > 7 && name.ends_with(kStagedSuffix);
    const bool temp = name.find(".tmp.") != std::string::npos;
    if (staged || temp) fs::remove(entry.path());
  }
}

void Scene::save() {
  if (root_.empty() || dirty_.empty()) {
    dirty_.clear();
    return;
  }
  auto &hook = save_step_hook();
  int step = 0;
  auto checkpoint = [&] {
    if (hook) hook(step);
    ++step;
  };

  const fs::path dir = root_ / "labels";
  fs::create_directories(dir);
  Json frames = Json::array();
  for (int frame : dirty_) {
    Json record = Json::object();
    if (auto it = labels_.find(frame); it != labels_.end()) {
      for (const auto &[object_id, label] : it->second) record[object_id] = label_to_json(label);
    }
    fs::path staged = pose_path(frame);
    staged += kStagedSuffix;
    checkpoint();
    write_file_atomic(staged, dump_json(record));
    frames.push_back(frame);
  }
  checkpoint();
  write_json_atomic(dir / kCommitFile, Json{{"frames", frames}});
  for (int frame : dirty_) {
    fs::path staged = pose_path(frame);
    staged += kStagedSuffix;
    checkpoint();
    fs::rename(staged, pose_path(frame));
  }
  checkpoint();
  fs::remove(dir / kCommitFile);
  // Hold exactly what a reader of the files would load.
  for (int frame : dirty_) {
    if (auto it = labels_.find(frame); it != labels_.end()) {
      for (auto &[object_id, label] : it->second) {
        label = label_from_json(object_id, label_to_json(label));
      }
    }
  }
  dirty_.clear();
}

}  // namespace dtt
