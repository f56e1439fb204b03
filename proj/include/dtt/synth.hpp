#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dtt/image_io.hpp"
#include "dtt/json_io.hpp"
#include "dtt/object_model.hpp"
#include "dtt/scene.hpp"

namespace dtt::synth {

struct Range {
  double min = 0.0;
  double max = 0.0;
};

enum class SamplingMode {
  kIndependent,  // every frame drawn on its own (dataset augmentation)
  kTrajectory,   // smooth random walk from a sampled start (tracking tests)
};

struct TrajectoryConfig {
  double max_step_rotation = 0.026;     // radians per frame (~1.5 deg)
  double max_step_translation = 0.008;  // meters per frame
  std::optional<int> teleport_frame;    // jump once at this frame
  Vec3 teleport_offset = Vec3(0.5, 0.0, 0.0);
};

struct SynthConfig {
  std::string model = "builtin:rover";  // or a PLY path
  std::vector<Part> model_parts;        // joints for a PLY model
  std::string object_id;                // defaults to the model's id
  int frame_count = 1;
  SamplingMode mode = SamplingMode::kIndependent;

  std::vector<double> distances = {0.5, 1.0, 2.0};  // meters, one drawn per frame
  Range yaw{-3.14159265358979, 3.14159265358979};   // about the model's up axis
  Range pitch{0.1, 0.6};                            // camera elevation
  Range roll{-0.1, 0.1};                            // about the optical axis
  double jitter_pixels = 40.0;                      // object center offset
  std::map<std::string, Range> joint_ranges;        // default: each joint's range

  Vec3 background = Vec3(8.0, 8.0, 10.0) / 255.0;
  double background_noise = 2.0 / 255.0;
  double depth_noise = 0.003;   // meters, additive Gaussian
  double dropout = 0.02;        // probability a depth pixel reads 0
  bool noise = true;            // false disables every noise source

  std::uint64_t seed = 0;
  CameraIntrinsics intrinsics{600.0, 600.0, 320.0, 240.0, 640, 480, 0.0001};
  int surface_samples = kDefaultSurfaceSamples;
  TrajectoryConfig trajectory;

  // Throws InputError when an invariant does not hold.
  void validate() const;
};

SynthConfig config_from_json(const Json &j);
Json config_to_json(const SynthConfig &config);

ObjectModel load_config_model(const SynthConfig &config);

struct FrameState {
  Pose pose;  // object -> camera
  JointAngles joints;
};

// Ground-truth state of every frame; depends only on the config.
std::vector<FrameState> sample_states(const SynthConfig &config, const ObjectModel &model);

struct RenderedFrame {
  RgbImage color;
  DepthFrame depth;
  MaskImage mask;
  std::vector<double> clean_depth;  // meters before noise and quantization, 0 = none
};

// Flat-shaded color, noisy quantized depth and mask for one frame. Noise is
// drawn from the (seed, frame) stream only.
RenderedFrame render_frame(const SynthConfig &config, const ObjectModel &model,
                           int mask_id, const FrameState &state, int frame);

// Writes a fully labeled scene. Output bytes depend only on the config, not
// on `threads`.
Scene generate(const SynthConfig &config, const std::filesystem::path &out, int threads = 1);

// Rest vertices with each part rotated about its joint. Throws InputError for
// angles outside a joint's declared range.
std::vector<Vec3> sample_articulation(const ObjectModel &model, const JointAngles &joints);

}  // namespace dtt::synth
