#include <doctest.h>

#include <fstream>
#include <numbers>

#include "dtt/error.hpp"
#include "dtt/labeling.hpp"
#include "dtt/metrics.hpp"
#include "dtt/ply_io.hpp"
#include "dtt/synth.hpp"
#include "support.hpp"

using namespace dtt;
using dtt::test::max_abs_diff;
using dtt::test::point_triangle_distance;
using dtt::test::read_file;
using dtt::test::snapshot;
using dtt::test::TempDir;
namespace fs = std::filesystem;

namespace {

// Small frames keep the directory tests quick.
synth::SynthConfig small_config(int frames, std::uint64_t seed) {
  synth::SynthConfig c;
  c.frame_count = frames;
  c.seed = seed;
  c.intrinsics = {300.0, 300.0, 160.0, 120.0, 320, 240, 0.0001};
  c.jitter_pixels = 20.0;
  c.surface_samples = 1024;
  return c;
}

double distance_to_posed_mesh(const ObjectModel &m, const std::vector<Vec3> &posed, const Vec3 &p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto &t : m.triangles()) {
    best = std::min(best, point_triangle_distance(p, posed[t[0]], posed[t[1]], posed[t[2]]));
  }
  return best;
}

}  // namespace

TEST_CASE("config json round trip and defaults") {
  synth::SynthConfig c = small_config(7, 99);
  c.mode = synth::SamplingMode::kTrajectory;
  c.joint_ranges["mast"] = {-0.1, 0.2};
  c.trajectory.teleport_frame = 3;
  c.distances = {0.5, 2.0};
  const synth::SynthConfig back =
      synth::config_from_json(Json::parse(synth::config_to_json(c).dump()));
  CHECK(synth::config_to_json(back) == synth::config_to_json(c));
  CHECK(back.trajectory.teleport_frame == 3);
  CHECK(back.joint_ranges.at("mast").max == 0.2);

  const synth::SynthConfig d = synth::config_from_json(Json::object());
  CHECK(d.distances == std::vector<double>{0.5, 1.0, 2.0});
  CHECK(d.depth_noise == 0.003);
  CHECK(d.dropout == 0.02);
  CHECK(d.background_noise == doctest::Approx(2.0 / 255.0));
  CHECK(d.model == "builtin:rover");
}

TEST_CASE("invalid configs are input errors") {
  for (const char *text :
       {R"({"frame_count": 0})", R"({"distances": []})", R"({"distances": [-1]})",
        R"({"yaw": [1, 0]})", R"({"mode": "spiral"})", R"({"dropout": 1.5})",
        R"({"frame_count": "many"})", R"({"pitch": [0]})", R"({"depth_noise": -1})"}) {
    CAPTURE(text);
    CHECK_THROWS_AS(synth::config_from_json(Json::parse(text)), InputError);
  }
  synth::SynthConfig c;
  c.joint_ranges["arm"] = {0.5, 0.1};
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("sample_articulation examples") {
  const ObjectModel rover = make_rover(256);
  CHECK(synth::sample_articulation(rover, {}) == rover.vertices());
  CHECK(synth::sample_articulation(rover, {{"mast", 0.0}, {"arm", 0.0}}) == rover.vertices());
  CHECK_NOTHROW(synth::sample_articulation(rover, {{"arm", 1.2}}));
  CHECK_THROWS_AS(synth::sample_articulation(rover, {{"arm", 1.2 + 1e-12}}), InputError);
  const auto moved = synth::sample_articulation(rover, {{"arm", 0.5}});
  const auto &owner = rover.vertex_part();
  for (std::size_t i = 0; i < moved.size(); ++i) {
    if (owner[i] < 0) CHECK(moved[i] == rover.vertices()[i]);
  }
}

TEST_CASE("same seed gives byte-identical scenes at any thread count") {
  TempDir dir;
  const synth::SynthConfig c = small_config(4, 7);
  synth::generate(c, dir / "a", 1);
  synth::generate(c, dir / "b", 3);
  synth::generate(c, dir / "c", 1);
  const auto a = snapshot(dir / "a");
  CHECK(a.size() == 3 + 4 * 4);
  CHECK(a == snapshot(dir / "b"));
  CHECK(a == snapshot(dir / "c"));
  synth::SynthConfig other = c;
  other.seed = 8;
  synth::generate(other, dir / "d", 1);
  CHECK(a != snapshot(dir / "d"));
}

TEST_CASE("labels are exact and noise only touches depth and background") {
  TempDir dir;
  synth::SynthConfig noisy = small_config(3, 11);
  synth::SynthConfig clean = noisy;
  clean.noise = false;
  synth::generate(noisy, dir / "noisy");
  const Scene scene = synth::generate(clean, dir / "clean");
  const ObjectModel model = synth::load_config_model(clean);
  const auto states = synth::sample_states(clean, model);
  for (int f = 0; f < 3; ++f) {
    const std::string stem = "labels/" + frame_stem(f);
    CHECK(read_file(dir / "noisy" / (stem + ".pose.json")) ==
          read_file(dir / "clean" / (stem + ".pose.json")));
    CHECK(read_file(dir / "noisy" / (stem + ".seg.png")) ==
          read_file(dir / "clean" / (stem + ".seg.png")));
    CHECK(read_file(dir / "noisy" / ("frames/" + frame_stem(f) + ".depth.png")) !=
          read_file(dir / "clean" / ("frames/" + frame_stem(f) + ".depth.png")));
    const auto label = scene.label(f, "rover");
    REQUIRE(label);
    CHECK(label->status == LabelStatus::kVerified);
    CHECK(max_abs_diff(label->pose, states[f].pose) < 1e-15);
    CHECK(label->joints == states[f].joints);
  }
}

TEST_CASE("noise-free depth lies on the posed model") {
  synth::SynthConfig c = small_config(3, 12);
  c.noise = false;
  const ObjectModel model = synth::load_config_model(c);
  const auto states = synth::sample_states(c, model);
  const auto &k = c.intrinsics;
  for (int f = 0; f < 3; ++f) {
    const auto r = synth::render_frame(c, model, 1, states[f], f);
    const auto posed = model.posed_vertices(states[f].joints);
    const Pose to_model = inverse(states[f].pose);
    double worst_clean = 0.0, worst_quantized = 0.0;
    int n = 0;
    for (int v = 0; v < k.height; ++v) {
      for (int u = 0; u < k.width; ++u) {
        const std::size_t i = static_cast<std::size_t>(v) * k.width + u;
        const double z = r.clean_depth[i];
        CHECK((z > 0) == (r.mask.data[i] != 0));
        if (z <= 0) continue;
        CHECK(std::abs(r.depth.raw[i] * k.depth_scale - z) <= k.depth_scale / 2 + 1e-12);
        if (++n % 7 != 0) continue;
        const Vec3 cam((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
        worst_clean = std::max(worst_clean, distance_to_posed_mesh(model, posed, to_model.apply(cam)));
        const double zq = r.depth.raw[i] * k.depth_scale;
        const Vec3 camq((u - k.cx) * zq / k.fx, (v - k.cy) * zq / k.fy, zq);
        // Quantization moves the point along its ray: |ray| / z times the depth step.
        const double bound = 0.5 * k.depth_scale * cam.norm() / z;
        worst_quantized = std::max(
            worst_quantized, distance_to_posed_mesh(model, posed, to_model.apply(camq)) / bound);
      }
    }
    CHECK(n > 100);
    CHECK(worst_clean < 1e-6);
    CHECK(worst_quantized <= 1.0 + 1e-6);
  }
}

TEST_CASE("depth noise and dropout follow the configured model") {
  synth::SynthConfig c = small_config(1, 13);
  c.intrinsics = {600.0, 600.0, 320.0, 240.0, 640, 480, 0.0001};
  c.distances = {0.5};
  const ObjectModel model = synth::load_config_model(c);
  const auto states = synth::sample_states(c, model);
  const auto r = synth::render_frame(c, model, 1, states[0], 0);
  double sum = 0, sum2 = 0;
  int n = 0, dropped = 0, covered = 0;
  for (std::size_t i = 0; i < r.clean_depth.size(); ++i) {
    if (r.clean_depth[i] <= 0) {
      CHECK(r.depth.raw[i] == 0);
      continue;
    }
    ++covered;
    if (r.depth.raw[i] == 0) {
      ++dropped;
      continue;
    }
    const double e = r.depth.raw[i] * c.intrinsics.depth_scale - r.clean_depth[i];
    sum += e, sum2 += e * e, ++n;
  }
  REQUIRE(covered > 10000);
  const double mean = sum / n, sd = std::sqrt(sum2 / n - mean * mean);
  CHECK(std::abs(mean) < 2e-4);
  CHECK(sd == doctest::Approx(0.003).epsilon(0.05));
  CHECK(static_cast<double>(dropped) / covered == doctest::Approx(0.02).epsilon(0.2));
}

TEST_CASE("stored masks equal a re-render from the stored labels") {
  TempDir dir;
  const Scene scene = synth::generate(small_config(3, 14), dir / "s");
  for (int f = 0; f < 3; ++f) {
    const Segmentation seg = render_segmentation(scene, f);
    CHECK(read_mask_png(scene.mask_path(f)).data == seg.mask.data);
    write_png(dir / "again.png", seg.mask);
    CHECK(read_file(dir / "again.png") == read_file(scene.mask_path(f)));
  }
}

TEST_CASE("trajectory steps stay within their bounds") {
  synth::SynthConfig c = small_config(40, 15);
  c.mode = synth::SamplingMode::kTrajectory;
  c.trajectory.teleport_frame = 25;
  const ObjectModel model = synth::load_config_model(c);
  const auto states = synth::sample_states(c, model);
  REQUIRE(states.size() == 40);
  for (std::size_t f = 1; f < states.size(); ++f) {
    const Pose &a = states[f - 1].pose, &b = states[f].pose;
    const Mat3 delta = b.rotation * a.rotation.transpose();
    const double angle = std::acos(std::clamp((delta.trace() - 1.0) / 2.0, -1.0, 1.0));
    CHECK(angle <= c.trajectory.max_step_rotation + 1e-9);
    const double move = (b.apply(model.center()) - a.apply(model.center())).norm();
    if (f == 25) {
      CHECK(move >= 0.5 - c.trajectory.max_step_translation - 1e-9);
    } else {
      CHECK(move <= c.trajectory.max_step_translation + 1e-9);
    }
    CHECK(states[f].joints == states[0].joints);
    CHECK(b.is_valid(1e-9));
  }
}

TEST_CASE("independent frames do not depend on the frame count") {
  synth::SynthConfig c = small_config(5, 16);
  const ObjectModel model = synth::load_config_model(c);
  const auto five = synth::sample_states(c, model);
  c.frame_count = 2;
  const auto two = synth::sample_states(c, model);
  for (int f = 0; f < 2; ++f) CHECK(max_abs_diff(two[f].pose, five[f].pose) == 0.0);
  // Every sampled distance comes from the configured list.
  c.frame_count = 60;
  for (const auto &s : synth::sample_states(c, model)) {
    const double z = s.pose.apply(model.center()).z();
    CHECK(std::min({std::abs(z - 0.5), std::abs(z - 1.0), std::abs(z - 2.0)}) < 1e-9);
  }
}

TEST_CASE("refine on an emitted frame keeps the label pose") {
  TempDir dir;
  synth::SynthConfig c;
  c.frame_count = 1;
  c.noise = false;
  c.seed = 17;
  c.distances = {1.0};
  Scene scene = synth::generate(c, dir / "s");
  const FrameLabel truth = *scene.label(0, "rover");
  const FrameLabel l = refine_frame(scene, 0, "rover", truth.pose, truth.joints);
  CHECK(l.status == LabelStatus::kRefined);
  CHECK(l.inlier_ratio > 0.95);
  CHECK(l.inlier_rmse < 0.003);
  const ObjectModel &model = scene.object("rover").model;
  CHECK(add_metric(model.posed_samples(truth.joints), truth.pose, l.pose) < 0.001);
}

TEST_CASE("a mesh file model with declared parts") {
  TempDir dir;
  const ObjectModel rover = make_rover(256);
  write_ply(dir / "bot.ply", PlyMesh{rover.vertices(), {}, rover.triangles()}, PlyFormat::kAscii,
            PlyPrecision::kDouble);
  synth::SynthConfig c = small_config(2, 18);
  c.model = (dir / "bot.ply").string();
  c.model_parts = rover.parts();
  c.joint_ranges["arm"] = {0.3, 0.3};
  const Scene scene = synth::generate(c, dir / "s");
  CHECK(scene.has_object("bot"));
  CHECK(scene.label(1, "bot")->joints.at("arm") == 0.3);
  CHECK(scene.object("bot").model.parts().size() == 2);

  synth::SynthConfig missing = c;
  missing.model = (dir / "nope.ply").string();
  CHECK_THROWS_AS(synth::generate(missing, dir / "t"), IoError);
  std::ofstream(dir / "blocker") << "x";
  CHECK_THROWS_AS(synth::generate(small_config(1, 1), dir / "blocker" / "s"), IoError);
}
