#include "dtt/synth.hpp"

#include <algorithm>
#include <cmath>

#include "dtt/error.hpp"
#include "dtt/labeling.hpp"
#include "dtt/parallel.hpp"
#include "dtt/random.hpp"

namespace dtt::synth {
namespace {

constexpr std::uint64_t kTrajectoryStream = 1ULL << 40;

Range range_from_json(const Json &j, const char *what) {
  if (!j.is_array() || j.size() != 2) {
    throw InputError(std::string(what) + " must be [min, max]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

Json range_to_json(const Range &r) { return Json::array({r.min, r.max}); }

void check_range(const Range &r, const std::string &what) {
  if (!(r.min <= r.max) || !std::isfinite(r.min) || !std::isfinite(r.max)) {
    throw InputError(what + " range is empty");
  }
}

// Model z (up) maps to camera -y, model x (forward) to camera x.
Mat3 upright_base() {
  Mat3 base;
  base << 1, 0, 0,
          0, 0, -1,
          0, 1, 0;
  return base;
}

FrameState draw_state(Rng &rng, const SynthConfig &config, const ObjectModel &model) {
  const double distance = config.distances[rng.index(config.distances.size())];
  const double yaw = rng.uniform(config.yaw.min, config.yaw.max);
  const double pitch = rng.uniform(config.pitch.min, config.pitch.max);
  const double roll = rng.uniform(config.roll.min, config.roll.max);
  const double du = rng.uniform(-config.jitter_pixels, config.jitter_pixels);
  const double dv = rng.uniform(-config.jitter_pixels, config.jitter_pixels);

  FrameState state;
  for (const Part &part : model.parts()) {
    Range r{part.joint.min_angle, part.joint.max_angle};
    if (auto it = config.joint_ranges.find(part.name); it != config.joint_ranges.end()) {
      r = it->second;
    }
    state.joints[part.name] = rng.uniform(r.min, r.max);
  }

  const Mat3 rotation = Eigen::AngleAxisd(roll, Vec3::UnitZ()).toRotationMatrix() *
                        Eigen::AngleAxisd(pitch, Vec3::UnitX()).toRotationMatrix() *
                        upright_base() *
                        Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  const CameraIntrinsics &k = config.intrinsics;
  const Vec3 center_cam(distance * du / k.fx, distance * dv / k.fy, distance);
  Pose pose;
  pose.rotation = rotation;
  pose.translation = center_cam - rotation * model.center();
  state.pose = pose;
  return state;
}

Vec3 random_direction(Rng &rng) {
  Vec3 d;
  do {
    d = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (d.norm() < 1e-9);
  return d.normalized();
}

std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

}  // namespace

void SynthConfig::validate() const {
  if (frame_count < 1) throw InputError("frame count must be >= 1");
  if (distances.empty()) throw InputError("distance list is empty");
  for (double d : distances) {
    if (!(d > 0.0)) throw InputError("distances must be > 0");
  }
  check_range(yaw, "yaw");
  check_range(pitch, "pitch");
  check_range(roll, "roll");
  for (const auto &[name, r] : joint_ranges) check_range(r, "joint '" + name + "'");
  if (!(jitter_pixels >= 0.0)) throw InputError("jitter must be >= 0");
  if (!(depth_noise >= 0.0) || !(background_noise >= 0.0)) throw InputError("noise must be >= 0");
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw InputError("dropout must be in [0, 1]");
  if (trajectory.max_step_rotation < 0.0 || trajectory.max_step_translation < 0.0) {
    throw InputError("trajectory steps must be >= 0");
  }
  intrinsics.validate();
}

SynthConfig config_from_json(const Json &j) {
  SynthConfig c;
  try {
    c.model = j.value("model", c.model);
    c.model_parts = parts_from_json(j.value("parts", Json()));
    c.object_id = j.value("object_id", c.object_id);
    c.frame_count = j.value("frame_count", c.frame_count);
    const std::string mode = j.value("mode", std::string("independent"));
    if (mode == "independent") {
      c.mode = SamplingMode::kIndependent;
    } else if (mode == "trajectory") {
      c.mode = SamplingMode::kTrajectory;
    } else {
      throw InputError("unknown sampling mode '" + mode + "'");
    }
    if (j.contains("distances")) c.distances = j["distances"].get<std::vector<double>>();
    if (j.contains("yaw")) c.yaw = range_from_json(j["yaw"], "yaw");
    if (j.contains("pitch")) c.pitch = range_from_json(j["pitch"], "pitch");
    if (j.contains("roll")) c.roll = range_from_json(j["roll"], "roll");
    c.jitter_pixels = j.value("jitter_pixels", c.jitter_pixels);
    if (j.contains("joint_ranges")) {
      for (const auto &[name, r] : j["joint_ranges"].items()) {
        c.joint_ranges[name] = range_from_json(r, "joint range");
      }
    }
    if (j.contains("background")) c.background = vec3_from_json(j["background"], "background");
    c.background_noise = j.value("background_noise", c.background_noise);
    c.depth_noise = j.value("depth_noise", c.depth_noise);
    c.dropout = j.value("dropout", c.dropout);
    c.noise = j.value("noise", c.noise);
    c.seed = j.value("seed", c.seed);
    if (j.contains("intrinsics")) c.intrinsics = intrinsics_from_json(j["intrinsics"]);
    c.surface_samples = j.value("surface_samples", c.surface_samples);
    if (j.contains("trajectory")) {
      const Json &t = j["trajectory"];
      c.trajectory.max_step_rotation = t.value("max_step_rotation", c.trajectory.max_step_rotation);
      c.trajectory.max_step_translation =
          t.value("max_step_translation", c.trajectory.max_step_translation);
      if (t.contains("teleport_frame") && !t["teleport_frame"].is_null()) {
        c.trajectory.teleport_frame = t["teleport_frame"].get<int>();
      }
      if (t.contains("teleport_offset")) {
        c.trajectory.teleport_offset = vec3_from_json(t["teleport_offset"], "teleport_offset");
      }
    }
  } catch (const nlohmann::json::exception &e) {
    throw InputError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

Json config_to_json(const SynthConfig &c) {
  Json joints = Json::object();
  for (const auto &[name, r] : c.joint_ranges) joints[name] = range_to_json(r);
  Json trajectory = {{"max_step_rotation", c.trajectory.max_step_rotation},
                     {"max_step_translation", c.trajectory.max_step_translation},
                     {"teleport_offset", {c.trajectory.teleport_offset.x(),
                                          c.trajectory.teleport_offset.y(),
                                          c.trajectory.teleport_offset.z()}}};
  trajectory["teleport_frame"] =
      c.trajectory.teleport_frame ? Json(*c.trajectory.teleport_frame) : Json(nullptr);
  return {{"model", c.model},
          {"parts", parts_to_json(c.model_parts)},
          {"object_id", c.object_id},
          {"frame_count", c.frame_count},
          {"mode", c.mode == SamplingMode::kIndependent ? "independent" : "trajectory"},
          {"distances", c.distances},
          {"yaw", range_to_json(c.yaw)},
          {"pitch", range_to_json(c.pitch)},
          {"roll", range_to_json(c.roll)},
          {"jitter_pixels", c.jitter_pixels},
          {"joint_ranges", joints},
          {"background", {c.background.x(), c.background.y(), c.background.z()}},
          {"background_noise", c.background_noise},
          {"depth_noise", c.depth_noise},
          {"dropout", c.dropout},
          {"noise", c.noise},
          {"seed", c.seed},
          {"intrinsics", intrinsics_to_json(c.intrinsics)},
          {"surface_samples", c.surface_samples},
          {"trajectory", trajectory}};
}

ObjectModel load_config_model(const SynthConfig &config) {
  if (config.model == "builtin:rover") return make_rover(config.surface_samples);
  std::string id = config.object_id;
  if (id.empty()) id = std::filesystem::path(config.model).stem().string();
  return load_model(id, config.model, config.model_parts, config.surface_samples);
}

std::vector<FrameState> sample_states(const SynthConfig &config, const ObjectModel &model) {
  config.validate();
  std::vector<FrameState> states;
  states.reserve(static_cast<std::size_t>(config.frame_count));
  if (config.mode == SamplingMode::kIndependent) {
    for (int f = 0; f < config.frame_count; ++f) {
      Rng rng = Rng::stream(config.seed, 2 * static_cast<std::uint64_t>(f));
      states.push_back(draw_state(rng, config, model));
    }
    return states;
  }

  Rng rng = Rng::stream(config.seed, kTrajectoryStream);
  FrameState state = draw_state(rng, config, model);
  Vec3 center = state.pose.apply(model.center());
  states.push_back(state);
  for (int f = 1; f < config.frame_count; ++f) {
    const Vec3 axis = random_direction(rng);
    const double angle = rng.uniform(0.0, config.trajectory.max_step_rotation);
    const Vec3 dir = random_direction(rng);
    const double shift = rng.uniform(0.0, config.trajectory.max_step_translation);
    center += shift * dir;
    if (config.trajectory.teleport_frame && *config.trajectory.teleport_frame == f) {
      center += config.trajectory.teleport_offset;
    }
    Pose pose;
    pose.rotation = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * state.pose.rotation;
    pose.translation = center - pose.rotation * model.center();
    state.pose = pose;
    states.push_back(state);
  }
  return states;
}

RenderedFrame render_frame(const SynthConfig &config, const ObjectModel &model,
                           int mask_id, const FrameState &state, int frame) {
  const CameraIntrinsics &k = config.intrinsics;
  const ZBuffer zb = render_objects(k, {{&model, state.pose, state.joints, mask_id}});

  const std::vector<Vec3> posed = model.posed_vertices(state.joints);
  const auto &tris = model.triangles();
  std::vector<Vec3> face_normal(tris.size());
  std::vector<Vec3> face_color(tris.size(), Vec3::Constant(0.5));
  for (std::size_t f = 0; f < tris.size(); ++f) {
    const Vec3 &a = posed[tris[f][0]], &b = posed[tris[f][1]], &c = posed[tris[f][2]];
    const Vec3 n = (b - a).cross(c - a);
    face_normal[f] = n.norm() > 0.0 ? Vec3(state.pose.rotation * n.normalized()) : Vec3::Zero();
    if (!model.vertex_colors().empty()) {
      const auto &vc = model.vertex_colors();
      face_color[f] = (vc[tris[f][0]] + vc[tris[f][1]] + vc[tris[f][2]]) / 3.0;
    }
  }

  RenderedFrame out;
  const std::size_t n_pixels = zb.depth().size();
  out.color = {k.width, k.height, std::vector<std::uint8_t>(n_pixels * 3)};
  out.depth = {k.width, k.height, std::vector<std::uint16_t>(n_pixels, 0)};
  out.mask = {k.width, k.height, std::vector<std::uint8_t>(n_pixels, 0)};
  out.clean_depth.assign(n_pixels, 0.0);

  Rng rng = Rng::stream(config.seed, 2 * static_cast<std::uint64_t>(frame) + 1);
  const bool noisy = config.noise;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const std::size_t i = zb.index(u, v);
      std::uint8_t *rgb = &out.color.data[i * 3];
      if (zb.label()[i] < 0) {
        for (int c = 0; c < 3; ++c) {
          const double noise = noisy ? config.background_noise * rng.normal() : 0.0;
          rgb[c] = to_byte(config.background[c] + noise);
        }
        continue;
      }
      const int f = zb.face()[i];
      const Vec3 ray = Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalized();
      const double shade = 0.3 + 0.7 * std::abs(face_normal[f].dot(ray));
      for (int c = 0; c < 3; ++c) rgb[c] = to_byte(face_color[f][c] * shade);
      out.mask.data[i] = static_cast<std::uint8_t>(zb.label()[i]);

      double z = zb.depth()[i];
      out.clean_depth[i] = z;
      if (noisy) {
        const bool drop = rng.uniform() < config.dropout;
        const double noise = config.depth_noise * rng.normal();
        if (drop) continue;
        z += noise;
      }
      const double raw = std::round(z / k.depth_scale);
      if (raw >= 1.0 && raw <= 65535.0) out.depth.raw[i] = static_cast<std::uint16_t>(raw);
    }
  }
  return out;
}

Scene generate(const SynthConfig &config, const std::filesystem::path &out, int threads) {
  config.validate();
  ObjectModel model = load_config_model(config);
  const std::string id = config.object_id.empty() ? model.id() : config.object_id;
  if (id != model.id()) {
    model = ObjectModel::build(id, model.vertices(), model.triangles(), model.vertex_colors(),
                               model.parts(), config.surface_samples);
  }
  Scene::create(out, config.intrinsics, {SceneObject{id, 1, std::move(model)}},
                config.frame_count);
  // Render from the model as stored, so relabeling from files reproduces
  // these frames exactly.
  Scene scene = Scene::open(out);
  const SceneObject &object = scene.object(id);
  const std::vector<FrameState> states = sample_states(config, object.model);

  parallel_for(config.frame_count, threads, [&](int f) {
    // Render what a reader of the label file reconstructs.
    FrameState as_read = states[f];
    as_read.pose = states[f].pose.canonical();
    const RenderedFrame r = render_frame(config, object.model, object.mask_id, as_read, f);
    write_png(scene.color_path(f), r.color);
    write_png(scene.depth_path(f), r.depth);
    write_png(scene.mask_path(f), r.mask);
    FrameLabel label;
    label.object_id = id;
    label.pose = states[f].pose;
    label.joints = states[f].joints;
    label.status = LabelStatus::kVerified;
    label.inlier_rmse = 0.0;
    label.inlier_ratio = 1.0;
    write_json_atomic(scene.pose_path(f), Json{{id, label_to_json(label)}});
  });
  return Scene::open(out);
}

std::vector<Vec3> sample_articulation(const ObjectModel &model, const JointAngles &joints) {
  return model.posed_vertices(joints);
}

}  // namespace dtt::synth
