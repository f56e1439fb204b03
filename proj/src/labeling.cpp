#include "dtt/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dtt/error.hpp"

namespace dtt {
namespace {

std::vector<Vec3> visible_samples(const CameraIntrinsics &k, const ObjectModel &model,
                                  const std::vector<Vec3> &samples, const Pose &pose,
                                  const JointAngles &joints, double tolerance) {
  const ZBuffer zb = render_objects(k, {{&model, pose, joints, 1}});
  std::vector<Vec3> out;
  out.reserve(samples.size());
  for (const Vec3 &s : samples) {
    const Vec3 c = pose.apply(s);
    if (c.z() <= ZBuffer::kNearPlane) continue;
    const long u = std::lround(k.fx * c.x() / c.z() + k.cx);
    const long v = std::lround(k.fy * c.y() / c.z() + k.cy);
    if (u < 0 || v < 0 || u >= k.width || v >= k.height) continue;
    const double rendered = zb.depth()[zb.index(static_cast<int>(u), static_cast<int>(v))];
    // Uncovered pixels sit just outside the silhouette: the sample is on the rim.
    if (rendered == ZBuffer::kEmpty || c.z() <= rendered + tolerance) out.push_back(s);
  }
  return out;
}

FrameLabel rejected(FrameLabel label, const Pose &pose, std::string error) {
  label.pose = pose;
  label.status = LabelStatus::kRejected;
  label.inlier_rmse = 0.0;
  label.inlier_ratio = 0.0;
  label.error = std::move(error);
  return label;
}

}  // namespace

FrameLabel refine_frame(const Scene &scene, int frame, const std::string &object_id,
                        const Pose &initial, const JointAngles &joints,
                        LabelStatus success_status, const RefineOptions &options) {
  scene.check_frame(frame);
  const SceneObject &object = scene.object(object_id);
  const ObjectModel &model = object.model;

  FrameLabel label;
  label.object_id = object_id;
  label.joints = joints;
  label.pose = initial;

  const std::vector<Vec3> samples = model.posed_samples(joints);
  std::vector<Vec3> source = samples;
  if (options.visible_samples_only) {
    source = visible_samples(scene.intrinsics(), model, samples, initial, joints,
                             options.visibility_tolerance);
    if (source.size() < 3) source = samples;
  }

  const PointCloud cloud = scene.cloud(frame, options.cloud_stride);
  const Vec3 center = initial.apply(model.center());
  const double radius = options.crop_factor * model.diameter();
  std::vector<Vec3> crop;
  for (const Vec3 &p : cloud.points) {
    if ((p - center).squaredNorm() <= radius * radius) crop.push_back(p);
  }
  if (crop.empty()) {
    return rejected(std::move(label), initial,
                    "no scene points within " + std::to_string(radius) +
                        " m of the object center");
  }

  try {
    const IcpResult result = icp(source, crop, initial, options.icp);
    label.pose = result.pose;
    label.inlier_rmse = result.inlier_rmse;
    label.inlier_ratio = result.inlier_ratio;
    label.status = success_status;
  } catch (const RegistrationError &e) {
    return rejected(std::move(label), e.last_pose(), e.what());
  }
  return label;
}

FrameLabel refine_stored(Scene &scene, int frame, const std::string &object_id,
                         const RefineOptions &options) {
  const std::optional<FrameLabel> current = scene.label(frame, object_id);
  if (!current) {
    throw PreconditionError("frame " + std::to_string(frame) + " has no label for '" +
                            object_id + "'");
  }
  transition(current->status, LabelEvent::kRefineOk);  // validate before the work
  FrameLabel label = refine_frame(scene, frame, object_id, current->pose, current->joints,
                                  LabelStatus::kRefined, options);
  label.status = transition(current->status, label.status == LabelStatus::kRejected
                                                 ? LabelEvent::kRefineFail
                                                 : LabelEvent::kRefineOk);
  scene.put_label(frame, label);
  return label;
}

void check_propagation(const Scene &scene, const std::string &object_id, int from_frame,
                       int to_frame) {
  scene.check_frame(from_frame);
  scene.check_frame(to_frame);
  scene.object(object_id);
  const std::optional<FrameLabel> seed = scene.label(from_frame, object_id);
  if (!seed || (seed->status != LabelStatus::kRefined &&
                seed->status != LabelStatus::kVerified)) {
    throw PreconditionError("frame " + std::to_string(from_frame) +
                            " has no refined or verified label for '" + object_id + "'");
  }
}

std::vector<FrameLabel> propagate(Scene &scene, const std::string &object_id,
                                  int from_frame, int to_frame,
                                  const PropagateOptions &options) {
  check_propagation(scene, object_id, from_frame, to_frame);
  const std::optional<FrameLabel> seed = scene.label(from_frame, object_id);

  std::vector<FrameLabel> out;
  if (from_frame == to_frame) return out;
  const int step = to_frame > from_frame ? 1 : -1;
  Pose last_good = seed->pose;
  for (int k = from_frame + step;; k += step) {
    if (options.stop.stop_requested()) break;
    FrameLabel label = refine_frame(scene, k, object_id, last_good, seed->joints,
                                    LabelStatus::kPropagated, options.refine);
    const std::optional<FrameLabel> existing = scene.label(k, object_id);
    label.status = transition(existing ? std::optional(existing->status) : std::nullopt,
                              label.status == LabelStatus::kRejected
                                  ? LabelEvent::kPropagateFail
                                  : LabelEvent::kPropagateOk);
    const bool flagged = needs_review(label, scene.gates());
    if (!flagged) last_good = label.pose;
    scene.put_label(k, label);
    if (options.on_step) options.on_step({k, label, flagged});
    out.push_back(std::move(label));
    if (k == to_frame) break;
  }
  if (step < 0) std::reverse(out.begin(), out.end());
  return out;
}

FrameLabel review_label(Scene &scene, int frame, const std::string &object_id,
                        bool verified) {
  scene.object(object_id);
  std::optional<FrameLabel> label = scene.label(frame, object_id);
  const auto event = verified ? LabelEvent::kVerify : LabelEvent::kReject;
  // With no label this throws, naming the attempted transition.
  const LabelStatus next =
      transition(label ? std::optional(label->status) : std::nullopt, event);
  label->status = next;
  scene.put_label(frame, *label);
  return *label;
}

FrameLabel edit_label(Scene &scene, int frame, const std::string &object_id,
                      const Pose &pose, const JointAngles &joints) {
  const SceneObject &object = scene.object(object_id);
  object.model.joint_vector(joints);  // range check
  if (!pose.is_valid(1e-6)) throw InputError("pose rotation is not orthonormal");
  const std::optional<FrameLabel> current = scene.label(frame, object_id);
  FrameLabel label;
  label.object_id = object_id;
  label.pose = pose;
  label.joints = joints;
  label.status = transition(current ? std::optional(current->status) : std::nullopt,
                            LabelEvent::kEdit);
  scene.put_label(frame, label);
  return label;
}

ZBuffer render_objects(const CameraIntrinsics &intrinsics,
                       const std::vector<RenderItem> &items) {
  ZBuffer zb(intrinsics);
  for (const RenderItem &item : items) {
    std::vector<Vec3> vertices = item.model->posed_vertices(item.joints);
    for (Vec3 &v : vertices) v = item.pose.apply(v);
    zb.draw(vertices, item.model->triangles(), item.label);
  }
  return zb;
}

Segmentation render_segmentation(const Scene &scene, int frame,
                                 const SegmentationOptions &options) {
  scene.check_frame(frame);
  const CameraIntrinsics &k = scene.intrinsics();
  std::vector<RenderItem> items;
  if (const auto *labels = scene.frame_labels(frame)) {
    for (const auto &[object_id, label] : *labels) {
      if (label.status == LabelStatus::kRejected) continue;
      const SceneObject &object = scene.object(object_id);
      items.push_back({&object.model, label.pose, label.joints, object.mask_id});
    }
  }
  const ZBuffer zb = render_objects(k, items);

  Segmentation seg;
  seg.mask.width = k.width;
  seg.mask.height = k.height;
  seg.mask.data.assign(zb.label().size(), 0);
  seg.depth.assign(zb.depth().size(), 0.0);
  for (std::size_t i = 0; i < zb.label().size(); ++i) {
    if (zb.label()[i] > 0) {
      seg.mask.data[i] = static_cast<std::uint8_t>(zb.label()[i]);
      seg.depth[i] = zb.depth()[i];
    }
  }

  if (options.occlusion_aware && !items.empty()) {
    const DepthFrame measured = scene.depth(frame);
    if (measured.width != k.width || measured.height != k.height) {
      throw InputError("measured depth size differs from the intrinsics");
    }
    for (std::size_t i = 0; i < seg.depth.size(); ++i) {
      if (seg.mask.data[i] == 0 || measured.raw[i] == 0) continue;
      const double z = measured.raw[i] * k.depth_scale;
      if (z < seg.depth[i] - options.occlusion_margin) {
        seg.mask.data[i] = 0;
        seg.depth[i] = 0.0;
      }
    }
  }
  return seg;
}

std::vector<BoxRecord> boxes_from_mask(const MaskImage &mask,
                                       const std::vector<SceneObject> &objects) {
  std::vector<BoxRecord> out;
  if (mask.width <= 0 || mask.height <= 0) return out;
  for (std::size_t c = 0; c < objects.size(); ++c) {
    const auto id = static_cast<std::uint8_t>(objects[c].mask_id);
    int u_min = mask.width, u_max = -1, v_min = mask.height, v_max = -1;
    for (int v = 0; v < mask.height; ++v) {
      for (int u = 0; u < mask.width; ++u) {
        if (mask.data[static_cast<std::size_t>(v) * mask.width + u] != id) continue;
        u_min = std::min(u_min, u);
        u_max = std::max(u_max, u);
        v_min = std::min(v_min, v);
        v_max = std::max(v_max, v);
      }
    }
    if (u_max < 0) continue;
    BoxRecord box;
    box.class_index = static_cast<int>(c);
    box.cx = (u_min + u_max + 1) / 2.0 / mask.width;
    box.cy = (v_min + v_max + 1) / 2.0 / mask.height;
    box.w = static_cast<double>(u_max - u_min + 1) / mask.width;
    box.h = static_cast<double>(v_max - v_min + 1) / mask.height;
    out.push_back(box);
  }
  return out;
}

std::string format_boxes(const std::vector<BoxRecord> &boxes, BoxFormat) {
  std::string out;
  char line[128];
  for (const auto &b : boxes) {
    std::snprintf(line, sizeof(line), "%d %.6f %.6f %.6f %.6f\n", b.class_index, b.cx,
                  b.cy, b.w, b.h);
    out += line;
  }
  return out;
}

std::map<int, std::vector<BoxRecord>> export_bboxes(const Scene &scene, BoxFormat) {
  std::map<int, std::vector<BoxRecord>> out;
  if (scene.root().empty()) throw PreconditionError("scene has no directory to read masks from");
  for (int frame = 0; frame < scene.frame_count(); ++frame) {
    const auto path = scene.mask_path(frame);
    if (!std::filesystem::exists(path)) continue;
    out[frame] = boxes_from_mask(read_mask_png(path), scene.objects());
  }
  if (out.empty()) throw PreconditionError("no segmentation masks found; run segment first");
  return out;
}

}  // namespace dtt
