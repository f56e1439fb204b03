#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dtt/geometry.hpp"
#include "dtt/image_io.hpp"
#include "dtt/json_io.hpp"
#include "dtt/object_model.hpp"

namespace dtt {

enum class LabelStatus { kSeeded, kRefined, kPropagated, kVerified, kRejected };

std::string_view to_string(LabelStatus status);
LabelStatus parse_status(std::string_view text);

// What happened to a label. Every status change goes through transition().
enum class LabelEvent {
  kEdit,           // human placed or fixed the pose
  kRefineOk,
  kRefineFail,
  kPropagateOk,    // written onto a frame by propagation
  kPropagateFail,
  kVerify,
  kReject,
};

std::string_view to_string(LabelEvent event);

// Allowed transitions ("none" means the frame has no label yet):
//   any | none            --edit-->            seeded
//   seeded | refined      --refine ok/fail-->  refined | rejected
//   any | none            --propagate-->       propagated | rejected
//   refined | propagated  --verify/reject-->   verified | rejected
// Anything else throws ValidationError naming the attempted transition.
LabelStatus transition(std::optional<LabelStatus> current, LabelEvent event);

struct FrameLabel {
  std::string object_id;
  Pose pose;  // object -> camera
  JointAngles joints;
  LabelStatus status = LabelStatus::kSeeded;
  double inlier_rmse = 0.0;
  double inlier_ratio = 0.0;
  std::string error;  // set when registration failed
};

struct ReviewGates {
  double rmse_gate = 0.010;   // meters
  double inlier_gate = 0.6;   // fraction
};

// True when a human should look at the label: registration failed, or the
// residuals miss a gate. Verified labels are never flagged.
bool needs_review(const FrameLabel &label, const ReviewGates &gates);

// Per-object record of a pose file: {"q","t","joints","status","inlier_rmse",
// "inlier_ratio"} plus "error" when set.
Json label_to_json(const FrameLabel &label);
FrameLabel label_from_json(const std::string &object_id, const Json &j);

struct SceneObject {
  std::string id;
  int mask_id = 0;  // value in segmentation masks, 1..255
  ObjectModel model;
};

std::string frame_stem(int frame);  // zero-padded to 6 digits

// A scene directory:
//   meta.json, camera_intrinsics.json,
//   frames/NNNNNN.color.png, frames/NNNNNN.depth.png,
//   labels/NNNNNN.pose.json, labels/NNNNNN.seg.png,
//   models/<id>.ply
// Frames can also be held in memory (root() empty) for tests and synthesis.
// Not internally synchronized: one writer at a time.
class Scene {
 public:
  using FrameLabels = std::map<std::string, FrameLabel>;

  // Loads metadata, models and all label files. Finishes or discards any
  // interrupted label save first.
  static Scene open(const std::filesystem::path &root);

  static Scene in_memory(const CameraIntrinsics &intrinsics,
                         std::vector<SceneObject> objects, int frame_count);

  // Writes meta.json, camera_intrinsics.json and the model PLY files, and
  // creates the frames/ and labels/ directories.
  static Scene create(const std::filesystem::path &root,
                      const CameraIntrinsics &intrinsics,
                      std::vector<SceneObject> objects, int frame_count,
                      const ReviewGates &gates = {});

  const std::filesystem::path &root() const { return root_; }
  std::string id() const;
  int frame_count() const { return frame_count_; }
  const CameraIntrinsics &intrinsics() const { return intrinsics_; }
  const ReviewGates &gates() const { return gates_; }
  void set_gates(const ReviewGates &gates) { gates_ = gates; }
  const std::optional<Pose> &mocap_to_camera() const { return mocap_to_camera_; }

  const std::vector<SceneObject> &objects() const { return objects_; }
  const SceneObject &object(const std::string &id) const;  // throws InputError
  bool has_object(const std::string &id) const;
  int object_index(const std::string &id) const;

  void check_frame(int frame) const;  // throws InputError when out of range

  DepthFrame depth(int frame) const;
  std::optional<RgbImage> color(int frame) const;
  // Backprojected depth, or the cloud installed with set_cloud().
  PointCloud cloud(int frame, int stride = 1) const;

  void set_depth(int frame, DepthFrame depth);
  void set_color(int frame, RgbImage color);
  void set_cloud(int frame, PointCloud cloud);

  const std::map<int, FrameLabels> &labels() const { return labels_; }
  std::optional<FrameLabel> label(int frame, const std::string &object_id) const;
  const FrameLabels *frame_labels(int frame) const;
  // Stores a label as-is (status changes are the caller's job) and marks the
  // frame dirty. Throws InputError for unknown objects or frames.
  void put_label(int frame, FrameLabel label);

  const std::set<int> &dirty_frames() const { return dirty_; }

  // Atomically persists the pose files of all dirty frames: staged files, a
  // commit record, then renames. No-op for in-memory scenes.
  void save();

  std::filesystem::path pose_path(int frame) const;
  std::filesystem::path mask_path(int frame) const;
  std::filesystem::path depth_path(int frame) const;
  std::filesystem::path color_path(int frame) const;

  // Test hook invoked before each step of save(); may throw to simulate a
  // crash part-way through.
  static std::function<void(int step)> &save_step_hook();

 private:
  void recover();
  void load_labels();

  std::filesystem::path root_;
  int frame_count_ = 0;
  CameraIntrinsics intrinsics_;
  ReviewGates gates_;
  std::optional<Pose> mocap_to_camera_;
  std::vector<SceneObject> objects_;
  std::map<int, FrameLabels> labels_;
  std::set<int> dirty_;
  std::map<int, DepthFrame> depth_;
  std::map<int, RgbImage> color_;
  std::map<int, PointCloud> cloud_;
};

// Loads a mesh file into a model, attaching the parts declared in meta.json.
ObjectModel load_model(const std::string &id, const std::filesystem::path &ply,
                       std::vector<Part> parts = {},
                       int sample_count = kDefaultSurfaceSamples);

Json parts_to_json(const std::vector<Part> &parts);
std::vector<Part> parts_from_json(const Json &j);

}  // namespace dtt
