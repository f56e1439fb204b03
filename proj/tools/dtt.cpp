// dtt: command-line front end for the dataset toolkit.
#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dtt/alignment.hpp"
#include "dtt/error.hpp"
#include "dtt/image_io.hpp"
#include "dtt/json_io.hpp"
#include "dtt/labeling.hpp"
#include "dtt/metrics.hpp"
#include "dtt/parallel.hpp"
#include "dtt/ply_io.hpp"
#include "dtt/scene.hpp"
#include "dtt/service.hpp"
#include "dtt/synth.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace fs = std::filesystem;
using namespace dtt;

namespace {

constexpr int kExitUsage = 2;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return 3;
    case ErrorKind::kIo: return 4;
    case ErrorKind::kPrecondition: return 5;
    case ErrorKind::kDegenerate: return 6;
    case ErrorKind::kRegistration: return 7;
    case ErrorKind::kValidation: return 8;
    case ErrorKind::kConflict: return 9;
  }
  return 1;
}

const char *kExitCodes =
    "Exit codes: 0 ok, 2 usage, 3 input, 4 io, 5 precondition, 6 degenerate,\n"
    "7 registration, 8 validation, 9 conflict. Failures also print one JSON\n"
    "line {\"error\": <category>, \"message\": ...} on stderr.";

int fail(std::string_view kind, const std::string &message, int code) {
  std::cerr << Json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

struct Globals {
  std::string data_root;
  std::string log_level = "warn";
  std::optional<std::uint64_t> seed;
  int threads = 1;

  fs::path resolve(const std::string &p) const {
    const fs::path path(p);
    if (path.is_absolute() || data_root.empty() || fs::exists(path)) return path;
    return fs::path(data_root) / path;
  }
};

void write_text(const fs::path &path, const std::string &text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

FrameLabel print_label(int frame, const FrameLabel &label, const ReviewGates &gates) {
  std::printf("frame %d %s status=%s rmse=%.6g ratio=%.4f%s\n", frame, label.object_id.c_str(),
              std::string(to_string(label.status)).c_str(), label.inlier_rmse, label.inlier_ratio,
              needs_review(label, gates) ? " flagged" : "");
  return label;
}

int run_calibrate(const Globals &, const std::string &pairs_path, const std::string &out) {
  const Json j = read_json(pairs_path);
  if (!j.is_array()) throw InputError("pairs file must be a JSON list");
  Correspondences c;
  for (const Json &pair : j) {
    if (!pair.is_object() || !pair.contains("mocap") || !pair.contains("camera")) {
      throw InputError("each pair needs \"mocap\" and \"camera\"");
    }
    c.source.push_back(vec3_from_json(pair["mocap"], "mocap"));
    c.target.push_back(vec3_from_json(pair["camera"], "camera"));
  }
  const Pose pose = kabsch_align(c);
  const double rms = alignment_rms(c.source, c.target, pose);
  write_text(out, dump_json({{"mocap_to_camera", pose_to_json(pose)}, {"rms_residual", rms}}));
  std::printf("rms_residual %.3e\n", rms);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Ground-truth pose labeling and evaluation toolkit", "dtt"};
  app.footer(kExitCodes);
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  Globals g;
  if (const char *root = std::getenv("DTT_DATA_ROOT")) g.data_root = root;
  app.add_option("--data-root", g.data_root, "Root for relative scene paths (env DTT_DATA_ROOT)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  app.add_option("--seed", g.seed, "Seed for every random draw");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string scene_path, out, object_id, pairs, init_path, config_path, pred_path, curve_csv_path;
  std::string ui_dir, host = "127.0.0.1";
  int frame = 0, from = 0, to = 0, stride = 1, port = 8080;
  std::optional<int> frame_count;
  std::optional<std::string> mode;
  bool ascii = false, occlusion_aware = false, no_noise = false;
  double max_threshold = kDefaultMaxThreshold;

  auto *calibrate = app.add_subcommand("calibrate", "Mocap-to-camera extrinsics from marker pairs");
  calibrate->add_option("--pairs", pairs, "JSON list of {camera, mocap} points")->required();
  calibrate->add_option("--out", out, "Extrinsics JSON to write")->required();

  auto *backproject_cmd = app.add_subcommand("backproject", "Export a frame's point cloud as PLY");
  backproject_cmd->add_option("--scene", scene_path)->required();
  backproject_cmd->add_option("--frame", frame)->required();
  backproject_cmd->add_option("--out", out)->required();
  backproject_cmd->add_option("--stride", stride)->check(CLI::PositiveNumber);
  backproject_cmd->add_flag("--ascii", ascii, "ASCII instead of binary PLY");

  auto *refine = app.add_subcommand("refine", "ICP-refine one frame's label");
  refine->add_option("--scene", scene_path)->required();
  refine->add_option("--frame", frame)->required();
  refine->add_option("--object", object_id)->required();
  refine->add_option("--init", init_path, "Pose JSON {q, t, joints?} to start from");

  auto *propagate_cmd = app.add_subcommand("propagate", "Track a label across frames");
  propagate_cmd->add_option("--scene", scene_path)->required();
  propagate_cmd->add_option("--object", object_id)->required();
  propagate_cmd->add_option("--from", from)->required();
  propagate_cmd->add_option("--to", to)->required();

  auto *segment = app.add_subcommand("segment", "Render segmentation masks from labels");
  segment->add_option("--scene", scene_path)->required();
  segment->add_flag("--occlusion-aware", occlusion_aware,
                    "Drop pixels where measured depth is nearer than the render");

  auto *bbox = app.add_subcommand("bbox-export", "Boxes from masks, one text file per frame");
  bbox->add_option("--scene", scene_path)->required();
  bbox->add_option("--out", out)->required();

  auto *synth_cmd = app.add_subcommand("synth", "Generate a labeled synthetic scene");
  synth_cmd->add_option("--config", config_path)->required();
  synth_cmd->add_option("--out", out)->required();
  synth_cmd->add_option("--frames", frame_count)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--mode", mode)->check(CLI::IsMember({"independent", "trajectory"}));
  synth_cmd->add_flag("--no-noise", no_noise);

  auto *eval = app.add_subcommand("eval", "Score predictions against verified labels");
  eval->add_option("--scene", scene_path)->required();
  eval->add_option("--pred", pred_path)->required();
  eval->add_option("--max-threshold", max_threshold)->check(CLI::PositiveNumber);
  eval->add_option("--out", out)->required();
  eval->add_option("--curve-csv", curve_csv_path);

  auto *annotate = app.add_subcommand("annotate", "Serve scenes over HTTP for review");
  annotate->add_option("--scene", scene_path, "Scene directory (default: all under --data-root)");
  annotate->add_option("--port", port)->check(CLI::Range(0, 65535));
  annotate->add_option("--host", host);
  annotate->add_option("--ui-dir", ui_dir, "Static UI assets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return fail("usage", e.what(), kExitUsage);
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("dtt"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*calibrate) return run_calibrate(g, pairs, out);

    if (*backproject_cmd) {
      const Scene scene = Scene::open(g.resolve(scene_path));
      const PointCloud cloud = scene.cloud(frame, stride);
      write_ply(out, cloud, ascii ? PlyFormat::kAscii : PlyFormat::kBinaryLittleEndian);
      std::printf("points %zu\n", cloud.size());
      return 0;
    }

    if (*refine) {
      Scene scene = Scene::open(g.resolve(scene_path));
      if (!init_path.empty()) {
        const Json init = read_json(init_path);
        JointAngles joints;
        if (init.contains("joints")) joints = init["joints"].get<JointAngles>();
        edit_label(scene, frame, object_id, pose_from_json(init), joints);
      }
      const FrameLabel label = refine_stored(scene, frame, object_id);
      scene.save();
      print_label(frame, label, scene.gates());
      return 0;
    }

    if (*propagate_cmd) {
      Scene scene = Scene::open(g.resolve(scene_path));
      const auto labels = propagate(scene, object_id, from, to);
      scene.save();
      int flagged = 0;
      const int step = to >= from ? 1 : -1;
      int k = std::min(from, to) + (step > 0 ? 1 : 0);
      for (const FrameLabel &label : labels) {
        flagged += needs_review(print_label(k++, label, scene.gates()), scene.gates());
      }
      std::printf("propagated %zu frames, %d flagged\n", labels.size(), flagged);
      return 0;
    }

    if (*segment) {
      const Scene scene = Scene::open(g.resolve(scene_path));
      SegmentationOptions opts;
      opts.occlusion_aware = occlusion_aware;
      parallel_for(scene.frame_count(), g.threads, [&](int f) {
        write_png(scene.mask_path(f), render_segmentation(scene, f, opts).mask);
      });
      std::printf("masks %d\n", scene.frame_count());
      return 0;
    }

    if (*bbox) {
      const Scene scene = Scene::open(g.resolve(scene_path));
      const auto boxes = export_bboxes(scene);
      fs::create_directories(out);
      std::string classes;
      for (const auto &o : scene.objects()) classes += o.id + "\n";
      write_text(fs::path(out) / "classes.txt", classes);
      for (const auto &[f, records] : boxes) {
        write_text(fs::path(out) / (frame_stem(f) + ".txt"), format_boxes(records));
      }
      std::printf("box files %zu\n", boxes.size());
      return 0;
    }

    if (*synth_cmd) {
      synth::SynthConfig config = synth::config_from_json(read_json(config_path));
      if (g.seed) config.seed = *g.seed;
      if (frame_count) config.frame_count = *frame_count;
      if (mode) {
        config.mode = *mode == "trajectory" ? synth::SamplingMode::kTrajectory
                                            : synth::SamplingMode::kIndependent;
      }
      if (no_noise) config.noise = false;
      config.validate();
      const Scene scene = synth::generate(config, g.resolve(out), g.threads);
      std::printf("frames %d\n", scene.frame_count());
      return 0;
    }

    if (*eval) {
      const Scene scene = Scene::open(g.resolve(scene_path));
      const EvalReport report =
          evaluate_scene(scene, read_predictions(pred_path), max_threshold, g.threads);
      write_text(out, dump_json(report_to_json(report)));
      if (!curve_csv_path.empty()) write_text(curve_csv_path, curve_csv(report));
      if (report.empty()) {
        std::printf("records 0 (empty)\n");
      } else {
        std::printf("records %zu auc_add_s %.4f auc_add %.4f\n", report.records.size(),
                    *report.auc_add_s, *report.auc_add);
      }
      return 0;
    }

    if (*annotate) {
      ServiceOptions opts;
      if (!ui_dir.empty()) opts.ui_dir = ui_dir;
      if (scene_path.empty()) {
        if (g.data_root.empty()) throw InputError("give --scene or a data root");
        opts.data_root = g.data_root;
      }
      // Test hook: die without cleanup at the given save step.
      if (const char *step = std::getenv("DTT_CRASH_AT_SAVE_STEP")) {
        const int crash_step = std::atoi(step);
        Scene::save_step_hook() = [crash_step](int s) {
          if (s == crash_step) std::_Exit(137);
        };
      }
      Service service(opts);
      if (!scene_path.empty()) service.add_scene(g.resolve(scene_path));
      const int bound = port == 0 ? service.bind_to_any_port(host)
                                  : (service.bind(host, port) ? port : -1);
      if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
      std::printf("listening %s:%d\n", host.c_str(), bound);
      std::fflush(stdout);
      service.listen_after_bind();
      return 0;
    }
  } catch (const Error &e) {
    return fail(to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const fs::filesystem_error &e) {
    return fail("io", e.what(), exit_code(ErrorKind::kIo));
  } catch (const nlohmann::json::exception &e) {
    return fail("input", e.what(), exit_code(ErrorKind::kInput));
  } catch (const std::exception &e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
