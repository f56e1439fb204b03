#include <doctest.h>

#include <atomic>
#include <cstring>
#include <thread>

#include "dtt/json_io.hpp"
#include "dtt/labeling.hpp"
#include "dtt/metrics.hpp"
#include "dtt/scene.hpp"
#include "dtt/service.hpp"
#include "dtt/synth.hpp"
#include "process.hpp"
#include "support.hpp"

// After the dtt headers: httplib's resolver includes define `_res`.
#include <httplib.h>

using namespace dtt;
using dtt::test::TempDir;
namespace fs = std::filesystem;

namespace {

constexpr int kFrames = 40;

// One noise-free trajectory scene shared by the tests; each test serves a copy.
const fs::path &pristine_scene() {
  static TempDir dir;
  static const fs::path root = [] {
    synth::SynthConfig c;
    c.frame_count = kFrames;
    c.seed = 404;
    c.mode = synth::SamplingMode::kTrajectory;
    c.noise = false;
    c.distances = {1.0};
    c.surface_samples = 2048;
    const fs::path out = dir / "pristine";
    synth::generate(c, out);
    return out;
  }();
  return root;
}

fs::path copy_scene(const TempDir &dir, const std::string &name = "scene") {
  const fs::path out = dir / name;
  fs::copy(pristine_scene(), out, fs::copy_options::recursive);
  return out;
}

class Running {
 public:
  explicit Running(const fs::path &scene) {
    service_.add_scene(scene);
    port_ = service_.bind_to_any_port();
    thread_ = std::thread([this] { service_.listen_after_bind(); });
    service_.wait_until_ready();
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(120);
    return c;
  }

 private:
  Service service_;
  int port_ = 0;
  std::thread thread_;
};

httplib::Headers with_token(const std::string &token) { return {{"X-Lock-Token", token}}; }

std::string lock(httplib::Client &c, const std::string &scene = "scene") {
  auto r = c.Post("/scenes/" + scene + "/lock");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return Json::parse(r->body).at("token").get<std::string>();
}

std::string pose_body(const Pose &pose, const JointAngles &joints) {
  Json j = pose_to_json(pose);
  j["joints"] = joints;
  return j.dump();
}

std::string label_path(int frame, const std::string &object) {
  return "/scenes/scene/frames/" + std::to_string(frame) + "/labels/" + object;
}

struct Event {
  std::string name;
  Json data;
};

std::vector<Event> parse_events(const std::string &stream) {
  std::vector<Event> out;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    const std::size_t end = stream.find("\n\n", pos);
    REQUIRE(end != std::string::npos);
    const std::string block = stream.substr(pos, end - pos);
    const std::size_t nl = block.find('\n');
    REQUIRE(block.rfind("event: ", 0) == 0);
    REQUIRE(block.compare(nl + 1, 6, "data: ") == 0);
    out.push_back({block.substr(7, nl - 7), Json::parse(block.substr(nl + 7))});
    pos = end + 2;
  }
  return out;
}

struct GroundTruth {
  ObjectModel model;
  std::string object;
  std::vector<FrameLabel> labels;

  double add(int frame, const Pose &pose) const {
    return add_metric(model.posed_samples(labels[frame].joints), labels[frame].pose, pose);
  }
};

const GroundTruth &ground_truth() {
  static const GroundTruth gt = [] {
    const Scene s = Scene::open(pristine_scene());
    GroundTruth g{s.objects()[0].model, s.objects()[0].id, {}};
    for (int f = 0; f < s.frame_count(); ++f) g.labels.push_back(*s.label(f, g.object));
    return g;
  }();
  return gt;
}

// Seeds frame 0 two centimeters off and refines it.
std::string seed_and_refine(httplib::Client &c) {
  const auto &gt = ground_truth();
  const std::string token = lock(c);
  Pose off = gt.labels[0].pose;
  off.translation.x() += 0.02;
  auto put = c.Put(label_path(0, gt.object), with_token(token),
                   pose_body(off, gt.labels[0].joints), "application/json");
  REQUIRE(put->status == 200);
  auto refined = c.Post("/scenes/scene/frames/0/refine/" + gt.object, with_token(token), "",
                        "application/json");
  REQUIRE(refined->status == 200);
  return token;
}

}  // namespace

TEST_CASE("scene listing and status") {
  TempDir dir;
  Running server(copy_scene(dir));
  auto c = server.client();
  auto r = c.Get("/scenes");
  REQUIRE(r->status == 200);
  const Json scenes = Json::parse(r->body);
  REQUIRE(scenes.size() == 1);
  CHECK(scenes[0]["id"] == "scene");
  CHECK(scenes[0]["frame_count"] == kFrames);
  CHECK(scenes[0]["objects"][0] == ground_truth().object);
  CHECK(scenes[0]["review_progress"] == 1.0);

  auto s = c.Get("/scenes/scene/status");
  REQUIRE(s->status == 200);
  const Json status = Json::parse(s->body);
  CHECK(status["frames"].size() == kFrames);
  CHECK(status["locked"] == false);
  CHECK(status["dirty"].empty());
  CHECK(status["last_saved"].is_null());
  CHECK(status["frames"][3]["labels"][ground_truth().object]["status"] == "verified");

  CHECK(c.Get("/scenes/nope/status")->status == 404);
  CHECK(c.Get(label_path(kFrames, ground_truth().object))->status == 404);
  CHECK(c.Get(label_path(0, "ghost"))->status == 404);
}

TEST_CASE("mutations need the lock token") {
  TempDir dir;
  Running server(copy_scene(dir));
  auto c = server.client();
  const auto &gt = ground_truth();
  const std::string body = pose_body(gt.labels[1].pose, {});
  auto r = c.Put(label_path(1, gt.object), body, "application/json");
  CHECK(r->status == 409);
  CHECK(Json::parse(r->body)["error"] == "conflict");

  const std::string token = lock(c);
  CHECK(c.Post("/scenes/scene/lock")->status == 409);
  CHECK(c.Put(label_path(1, gt.object), body, "application/json")->status == 409);
  CHECK(c.Put(label_path(1, gt.object), with_token("wrong"), body, "application/json")->status ==
        409);
  CHECK(c.Post("/scenes/scene/save")->status == 409);
  CHECK(c.Post("/scenes/scene/unlock", with_token("wrong"), "", "application/json")->status ==
        409);
  CHECK(c.Post("/scenes/scene/unlock", with_token(token), "", "application/json")->status == 200);
  CHECK(c.Put(label_path(1, gt.object), with_token(token), body, "application/json")->status ==
        409);
  const std::string again = lock(c);
  CHECK(again != token);
}

TEST_CASE("racing clients never share a lock") {
  TempDir dir;
  Running server(copy_scene(dir));
  for (int round = 0; round < 10; ++round) {
    constexpr int kClients = 16;
    std::atomic<int> ready{0};
    std::vector<int> codes(kClients);
    std::vector<std::string> tokens(kClients);
    std::vector<std::thread> threads;
    for (int i = 0; i < kClients; ++i) {
      threads.emplace_back([&, i] {
        auto c = server.client();
        ++ready;
        while (ready < kClients) std::this_thread::yield();
        auto r = c.Post("/scenes/scene/lock");
        codes[i] = r ? r->status : -1;
        if (r && r->status == 200) tokens[i] = Json::parse(r->body)["token"];
      });
    }
    for (auto &t : threads) t.join();
    CHECK(std::count(codes.begin(), codes.end(), 200) == 1);
    CHECK(std::count(codes.begin(), codes.end(), 409) == kClients - 1);
    const auto winner = std::find(codes.begin(), codes.end(), 200) - codes.begin();
    auto c = server.client();
    REQUIRE(c.Post("/scenes/scene/unlock", with_token(tokens[winner]), "", "application/json")
                ->status == 200);
  }
}

TEST_CASE("put then get round-trips byte-identical json") {
  TempDir dir;
  Running server(copy_scene(dir));
  auto c = server.client();
  const auto &gt = ground_truth();
  const std::string token = lock(c);
  Pose p = gt.labels[4].pose;
  p.translation.z() += 0.01;
  auto put = c.Put(label_path(4, gt.object), with_token(token),
                   pose_body(p, {{"arm", 0.25}}), "application/json");
  REQUIRE(put->status == 200);
  auto get = c.Get(label_path(4, gt.object));
  REQUIRE(get->status == 200);
  CHECK(get->body == put->body);
  const Json label = Json::parse(get->body);
  CHECK(label["status"] == "seeded");
  CHECK(label["joints"]["arm"] == 0.25);
  CHECK(pose_from_json(label).translation.isApprox(p.translation, 1e-15));

  auto status = Json::parse(c.Get("/scenes/scene/status")->body);
  CHECK(status["dirty"] == Json::array({4}));

  CHECK(c.Put(label_path(4, gt.object), with_token(token), "{not json", "application/json")
            ->status == 400);
  CHECK(c.Put(label_path(4, gt.object), with_token(token), R"({"q": [1, 0, 0]})",
              "application/json")
            ->status == 400);
  CHECK(c.Put(label_path(4, "ghost"), with_token(token), pose_body(p, {}), "application/json")
            ->status == 404);
}

TEST_CASE("refine corrects a 2 cm mis-seed; review follows the state machine") {
  TempDir dir;
  Running server(copy_scene(dir));
  auto c = server.client();
  const auto &gt = ground_truth();
  const std::string token = lock(c);
  Pose off = gt.labels[2].pose;
  off.translation.x() += 0.02;
  REQUIRE(c.Put(label_path(2, gt.object), with_token(token), pose_body(off, gt.labels[2].joints),
                "application/json")
              ->status == 200);

  auto review = c.Post("/scenes/scene/frames/2/review", with_token(token),
                       Json{{"object", gt.object}, {"verdict", "verified"}}.dump(),
                       "application/json");
  CHECK(review->status == 422);
  CHECK(Json::parse(review->body)["message"].get<std::string>().find("seeded") !=
        std::string::npos);

  auto refined = c.Post("/scenes/scene/frames/2/refine/" + gt.object, with_token(token), "",
                        "application/json");
  REQUIRE(refined->status == 200);
  const Json label = Json::parse(refined->body);
  CHECK(label["status"] == "refined");
  CHECK(label["flagged"] == false);
  // The pose oracle is ADD; the residual is floored by the pixel footprint.
  CHECK(gt.add(2, pose_from_json(label)) <= 0.002);
  CHECK(label["inlier_rmse"].get<double>() < 0.003);

  // Status reports the same residuals the refine call returned.
  const Json status = Json::parse(c.Get("/scenes/scene/status")->body);
  CHECK(status["frames"][2]["labels"][gt.object]["inlier_rmse"] == label["inlier_rmse"]);

  CHECK(c.Post("/scenes/scene/frames/2/review", with_token(token),
               Json{{"object", gt.object}, {"verdict", "maybe"}}.dump(), "application/json")
            ->status == 400);
  review = c.Post("/scenes/scene/frames/2/review", with_token(token),
                  Json{{"object", gt.object}, {"verdict", "verified"}}.dump(), "application/json");
  CHECK(review->status == 200);
  CHECK(Json::parse(review->body)["status"] == "verified");
}

TEST_CASE("propagation streams progress; readers see whole labels; save persists") {
  TempDir dir;
  const fs::path root = copy_scene(dir);
  Running server(root);
  auto c = server.client();
  const auto &gt = ground_truth();
  const std::string token = seed_and_refine(c);

  std::atomic<bool> done{false};
  std::atomic<int> reads{0}, bad_reads{0};
  std::thread reader([&] {
    auto rc = server.client();
    while (!done) {
      for (int f = 1; f <= 8; ++f) {
        auto r = rc.Get(label_path(f, gt.object));
        ++reads;
        if (!r || r->status != 200) {
          ++bad_reads;
          continue;
        }
        const Json j = Json::parse(r->body, nullptr, false);
        if (j.is_discarded() || !j.contains("q") || !j.contains("status")) ++bad_reads;
      }
    }
  });

  auto r = c.Post("/scenes/scene/propagate", with_token(token),
                  Json{{"object", gt.object}, {"from", 0}, {"to", 8}}.dump(), "application/json");
  done = true;
  reader.join();
  REQUIRE(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "text/event-stream");
  const auto events = parse_events(r->body);
  REQUIRE(events.size() == 9);
  for (int i = 0; i < 8; ++i) {
    CHECK(events[i].name == "progress");
    CHECK(events[i].data["frame"] == i + 1);
    CHECK(events[i].data["flagged"] == false);
    CHECK(events[i].data.contains("rmse"));
  }
  CHECK(events[8].name == "done");
  CHECK(events[8].data["state"] == "done");
  CHECK(events[8].data["frames_done"] == 8);
  CHECK(reads > 0);
  CHECK(bad_reads == 0);

  for (int f = 1; f <= 8; ++f) {
    const Json label = Json::parse(c.Get(label_path(f, gt.object))->body);
    CHECK(label["status"] == "propagated");
    CHECK(gt.add(f, pose_from_json(label)) <= 0.005);
  }
  const Json job = Json::parse(c.Get("/scenes/scene/job")->body);
  CHECK(job["state"] == "done");

  auto saved = c.Post("/scenes/scene/save", with_token(token), "", "application/json");
  REQUIRE(saved->status == 200);
  CHECK(Json::parse(saved->body)["saved"].size() == 9);
  const Json status = Json::parse(c.Get("/scenes/scene/status")->body);
  CHECK(status["dirty"].empty());
  CHECK(status["last_saved"].is_string());
  const Scene reopened = Scene::open(root);
  for (int f = 0; f <= 8; ++f) {
    CHECK(dump_json(label_to_json(*reopened.label(f, gt.object))) ==
          dump_json(Json::parse(c.Get(label_path(f, gt.object))->body)));
  }
}

TEST_CASE("propagation preconditions and cancellation") {
  TempDir dir;
  Running server(copy_scene(dir));
  auto c = server.client();
  const auto &gt = ground_truth();
  const std::string token = lock(c);
  CHECK(c.Get("/scenes/scene/job")->status == 404);

  // A seeded label is not a valid propagation source.
  REQUIRE(c.Put(label_path(0, gt.object), with_token(token),
                pose_body(gt.labels[0].pose, gt.labels[0].joints), "application/json")
              ->status == 200);
  auto r = c.Post("/scenes/scene/propagate", with_token(token),
                  Json{{"object", gt.object}, {"from", 0}, {"to", 5}}.dump(), "application/json");
  CHECK(r->status == 412);
  CHECK(c.Post("/scenes/scene/propagate", with_token(token), R"({"object": "x"})",
               "application/json")
            ->status == 400);

  REQUIRE(c.Post("/scenes/scene/frames/0/refine/" + gt.object, with_token(token), "",
                 "application/json")
              ->status == 200);
  httplib::Result stream;
  std::thread runner([&] {
    auto rc = server.client();
    stream = rc.Post("/scenes/scene/propagate", with_token(token),
                     Json{{"object", gt.object}, {"from", 0}, {"to", kFrames - 1}}.dump(),
                     "application/json");
  });
  Json job;
  for (int i = 0; i < 2000; ++i) {
    auto j = c.Get("/scenes/scene/job");
    if (j->status == 200) {
      job = Json::parse(j->body);
      if (job["frames_done"].get<int>() >= 1) break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  // Mutations wait for the job; reads do not.
  CHECK(c.Put(label_path(0, gt.object), with_token(token), pose_body(gt.labels[0].pose, {}),
              "application/json")
            ->status == 409);
  CHECK(c.Get(label_path(1, gt.object))->status == 200);
  CHECK(c.Post("/scenes/scene/job/cancel")->status == 409);
  CHECK(c.Post("/scenes/scene/job/cancel", with_token(token), "", "application/json")->status ==
        200);
  runner.join();
  REQUIRE(stream);
  const auto events = parse_events(stream->body);
  REQUIRE_FALSE(events.empty());
  CHECK(events.back().name == "done");
  CHECK(events.back().data["state"] == "cancelled");
  CHECK(events.back().data["frames_done"].get<int>() < kFrames - 1);
  CHECK(events.size() == events.back().data["frames_done"].get<std::size_t>() + 1);

  // The lock holder can mutate again once the job has stopped.
  CHECK(c.Put(label_path(0, gt.object), with_token(token), pose_body(gt.labels[0].pose, {}),
              "application/json")
            ->status == 200);
}

TEST_CASE("binary cloud block") {
  TempDir dir;
  const fs::path root = copy_scene(dir);
  Running server(root);
  auto c = server.client();
  const Scene scene = Scene::open(root);
  for (int stride : {1, 3}) {
    auto r = c.Get("/scenes/scene/frames/5/cloud?stride=" + std::to_string(stride));
    REQUIRE(r->status == 200);
    CHECK(r->get_header_value("Content-Type") == "application/octet-stream");
    const PointCloud cloud = scene.cloud(5, stride);
    std::uint32_t count = 0;
    std::memcpy(&count, r->body.data(), 4);
    REQUIRE(count == cloud.size());
    REQUIRE(r->body.size() == 4 + 15 * std::size_t{count});
    for (std::uint32_t i = 0; i < count; i += 97) {
      float p[3];
      std::memcpy(p, r->body.data() + 4 + 12 * i, 12);
      for (int d = 0; d < 3; ++d) CHECK(p[d] == static_cast<float>(cloud.points[i][d]));
    }
    if (count <= 5000) CHECK(r->body.size() < 100 * 1024);
  }
  CHECK(c.Get("/scenes/scene/frames/5/cloud?stride=0")->status == 400);
  CHECK(c.Get("/scenes/scene/frames/99/cloud")->status == 404);
}

TEST_CASE("killed between saves: the scene is the pre- or post-save state") {
  TempDir dir;
  const auto &gt = ground_truth();
  const fs::path before_dir = copy_scene(dir, "before");
  const auto before = dtt::test::snapshot(before_dir);

  // Edits three frames and saves through a child annotate process.
  auto edit_and_save = [&](const fs::path &root, std::optional<int> crash_step) {
    std::vector<std::string> env;
    if (crash_step) env.push_back("DTT_CRASH_AT_SAVE_STEP=" + std::to_string(*crash_step));
    dtt::test::Child child({DTT_CLI_PATH, "annotate", "--scene", root.string(), "--port", "0"},
                           env);
    const std::string line = child.read_line();
    REQUIRE(line.rfind("listening 127.0.0.1:", 0) == 0);
    httplib::Client c("127.0.0.1", std::stoi(line.substr(line.rfind(':') + 1)));
    const std::string token = lock(c, root.filename().string());
    const std::string base = "/scenes/" + root.filename().string() + "/frames/";
    for (int f : {3, 7, 11}) {
      Pose p = gt.labels[f].pose;
      p.translation.y() += 0.001 * f;
      REQUIRE(c.Put(base + std::to_string(f) + "/labels/" + gt.object, with_token(token),
                    pose_body(p, gt.labels[f].joints), "application/json")
                  ->status == 200);
    }
    auto r = c.Post("/scenes/" + root.filename().string() + "/save", with_token(token), "",
                    "application/json");
    if (crash_step) {
      CHECK_FALSE(r);
      CHECK(child.wait() == 137);
    } else {
      REQUIRE(r->status == 200);
    }
  };

  const fs::path after_dir = copy_scene(dir, "after");
  edit_and_save(after_dir, std::nullopt);
  const auto after = dtt::test::snapshot(after_dir);
  REQUIRE(after != before);

  // Three staged writes, the commit record, three renames, the cleanup.
  for (int step = 0; step < 8; ++step) {
    CAPTURE(step);
    const fs::path root = copy_scene(dir, "crash" + std::to_string(step));
    edit_and_save(root, step);
    Scene::open(root);  // recovery runs on open
    const auto got = dtt::test::snapshot(root);
    if (step <= 3) {
      CHECK(got == before);
    } else {
      CHECK(got == after);
    }
  }
}

TEST_CASE("data root discovery and static ui assets") {
  TempDir dir;
  copy_scene(dir, "alpha");
  copy_scene(dir, "beta");
  fs::create_directories(dir / "not-a-scene");
  dtt::test::TempDir assets;
  std::ofstream(assets / "index.html") << "<html>review</html>";
  ServiceOptions opts;
  opts.data_root = dir.path();
  opts.ui_dir = assets.path();
  Service service(opts);
  CHECK(service.scene_ids() == std::vector<std::string>{"alpha", "beta"});
  const int port = service.bind_to_any_port();
  std::thread t([&] { service.listen_after_bind(); });
  service.wait_until_ready();
  httplib::Client c("127.0.0.1", port);
  auto page = c.Get("/index.html");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body == "<html>review</html>");
  CHECK(Json::parse(c.Get("/scenes")->body).size() == 2);
  service.stop();
  t.join();

  ServiceOptions missing;
  missing.data_root = dir / "nope";
  CHECK_THROWS_AS(Service{missing}, IoError);
  CHECK_THROWS_AS(Service{}.add_scene(dir / "not-a-scene"), IoError);
}
