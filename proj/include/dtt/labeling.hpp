#pragma once

#include <functional>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

#include "dtt/alignment.hpp"
#include "dtt/image_io.hpp"
#include "dtt/raster.hpp"
#include "dtt/scene.hpp"

namespace dtt {

struct RefineOptions {
  IcpConfig icp;
  double crop_factor = 1.2;  // crop radius in model diameters
  // Register only the model samples visible from the camera at the initial
  // pose; the hidden side has no counterpart in a single depth view.
  bool visible_samples_only = true;
  double visibility_tolerance = 0.01;  // meters behind the rendered surface
  int cloud_stride = 1;
};

// Crops the frame's cloud around the initial object center, then registers
// the model's surface samples (posed at `joints`) to it. Success yields
// `success_status`; registration failure yields a rejected label carrying the
// error and the last pose reached.
FrameLabel refine_frame(const Scene &scene, int frame, const std::string &object_id,
                        const Pose &initial, const JointAngles &joints = {},
                        LabelStatus success_status = LabelStatus::kRefined,
                        const RefineOptions &options = {});

// Runs refine_frame from the frame's current label and stores the result
// through the status state machine (seeded/refined -> refined|rejected).
// Throws PreconditionError when the frame has no label for the object.
FrameLabel refine_stored(Scene &scene, int frame, const std::string &object_id,
                         const RefineOptions &options = {});

struct PropagationStep {
  int frame = 0;
  FrameLabel label;
  bool flagged = false;
};

struct PropagateOptions {
  RefineOptions refine;
  std::function<void(const PropagationStep &)> on_step;
  std::stop_token stop;  // checked between frames
};

// Tracks the object from `from_frame` toward `to_frame` (either direction),
// refining each frame from the last pose that passed the review gates. Every
// result is stored as propagated (or rejected) and returned in frame order.
// Throws PreconditionError unless from_frame holds a refined or verified label.
std::vector<FrameLabel> propagate(Scene &scene, const std::string &object_id,
                                  int from_frame, int to_frame,
                                  const PropagateOptions &options = {});

// The checks propagate() runs before touching any frame.
void check_propagation(const Scene &scene, const std::string &object_id, int from_frame,
                       int to_frame);

// Applies a human verdict (verify or reject) via the state machine.
FrameLabel review_label(Scene &scene, int frame, const std::string &object_id,
                        bool verified);

// Places or fixes a pose by hand: status becomes seeded.
FrameLabel edit_label(Scene &scene, int frame, const std::string &object_id,
                      const Pose &pose, const JointAngles &joints = {});

struct RenderItem {
  const ObjectModel *model = nullptr;
  Pose pose;
  JointAngles joints;
  int label = 0;
};

ZBuffer render_objects(const CameraIntrinsics &intrinsics,
                       const std::vector<RenderItem> &items);

struct Segmentation {
  MaskImage mask;              // object mask id per pixel, 0 = background
  std::vector<double> depth;   // rendered meters per pixel, 0 = background
};

struct SegmentationOptions {
  // Blank pixels whose measured depth is this much nearer than the render.
  bool occlusion_aware = false;
  double occlusion_margin = 0.02;
};

// Projects every non-rejected labeled object of the frame with one shared
// z-buffer.
Segmentation render_segmentation(const Scene &scene, int frame,
                                 const SegmentationOptions &options = {});

struct BoxRecord {
  int class_index = 0;  // position of the object in the scene registry
  double cx = 0.0;      // all normalized to [0, 1]
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

enum class BoxFormat { kYolo };

// Tight box around each object's mask pixels; absent objects get no record.
std::vector<BoxRecord> boxes_from_mask(const MaskImage &mask,
                                       const std::vector<SceneObject> &objects);

// "class cx cy w h" lines with six decimals.
std::string format_boxes(const std::vector<BoxRecord> &boxes,
                         BoxFormat format = BoxFormat::kYolo);

// Boxes for every frame that has a segmentation mask on disk. Throws
// PreconditionError when no frame has one.
std::map<int, std::vector<BoxRecord>> export_bboxes(const Scene &scene,
                                                    BoxFormat format = BoxFormat::kYolo);

}  // namespace dtt
