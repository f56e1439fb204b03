#include "dtt/service.hpp"

#include <bit>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <ctime>
#include <map>
#include <mutex>
#include <random>
#include <stop_token>
#include <thread>

#include "dtt/error.hpp"
#include "dtt/json_io.hpp"
#include "dtt/labeling.hpp"
#include "dtt/scene.hpp"

// After Eigen: the resolver headers pulled in here define a `_res` macro.
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace dtt {
namespace {

namespace fs = std::filesystem;

constexpr const char *kLockHeader = "X-Lock-Token";
constexpr const char *kJsonType = "application/json";

struct NotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return 400;
    case ErrorKind::kIo: return 500;
    case ErrorKind::kPrecondition: return 412;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kDegenerate:
    case ErrorKind::kRegistration:
    case ErrorKind::kValidation: return 422;
  }
  return 500;
}

void send_error(httplib::Response &res, int status, std::string_view kind,
                const std::string &message) {
  res.status = status;
  res.set_content(dump_json({{"error", kind}, {"message", message}}), kJsonType);
}

void send_json(httplib::Response &res, const Json &j) { res.set_content(dump_json(j), kJsonType); }

Json parse_body(const httplib::Request &req) {
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InputError("request body must be a JSON object");
  return j;
}

int frame_param(const httplib::Request &req, int index) {
  try {
    return std::stoi(req.matches[index].str());
  } catch (const std::exception &) {
    throw InputError("bad frame index '" + req.matches[index].str() + "'");
  }
}

std::string new_token() {
  std::random_device rd;
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%08x%08x%08x%08x", rd(), rd(), rd(), rd());
  return buf;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sse(const char *event, const Json &data) {
  return std::string("event: ") + event + "\ndata: " + data.dump() + "\n\n";
}

struct Job {
  int id = 0;
  std::string object_id;
  int from = 0;
  int to = 0;
  int total = 0;
  int frames_done = 0;
  int flagged = 0;
  std::string state = "running";  // running | done | cancelled | failed
  std::string error;
  bool finished = false;
  std::vector<std::string> events;  // formatted, replayed to late subscribers
  std::stop_source stop;
  std::thread thread;

  Json to_json() const {
    Json j = {{"id", id}, {"object", object_id}, {"from", from}, {"to", to},
              {"total", total}, {"frames_done", frames_done}, {"flagged", flagged},
              {"state", state}};
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct Session {
  explicit Session(Scene s) : scene(std::move(s)) {}

  std::mutex mutex;  // guards everything below
  std::condition_variable changed;
  Scene scene;
  std::string token;
  std::optional<std::string> last_saved;
  std::shared_ptr<Job> job;
  int next_job_id = 1;

  bool job_running() const { return job && !job->finished; }

  void require_lock(const httplib::Request &req) const {
    if (token.empty()) throw ConflictError("scene is not locked; POST /scenes/{id}/lock first");
    if (req.get_header_value(kLockHeader) != token) {
      throw ConflictError("missing or wrong lock token for this scene");
    }
    if (job_running()) throw ConflictError("a propagation job is running on this scene");
  }
};

void require_frame(const Scene &scene, int frame) {
  if (frame < 0 || frame >= scene.frame_count()) {
    throw NotFound("frame " + std::to_string(frame) + " is outside 0.." +
                   std::to_string(scene.frame_count() - 1));
  }
}

Json label_json(const FrameLabel &label, const ReviewGates &gates) {
  Json j = label_to_json(label);
  j["flagged"] = needs_review(label, gates);
  return j;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  mutable std::mutex sessions_mutex;
  std::map<std::string, std::unique_ptr<Session>> sessions;

  explicit Impl(ServiceOptions o) : options(std::move(o)) { routes(); }

  ~Impl() {
    server.stop();
    std::vector<std::shared_ptr<Job>> jobs;
    {
      std::lock_guard lock(sessions_mutex);
      for (auto &[id, s] : sessions) {
        std::lock_guard session_lock(s->mutex);
        if (s->job) jobs.push_back(s->job);
      }
    }
    for (auto &job : jobs) {
      job->stop.request_stop();
      if (job->thread.joinable()) job->thread.join();
    }
  }

  Session &session(const std::string &id) {
    std::lock_guard lock(sessions_mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw NotFound("unknown scene '" + id + "'");
    return *it->second;
  }

  template <typename Fn>
  void with_session(const httplib::Request &req, httplib::Response &res, Fn &&fn) {
    Session &s = session(req.matches[1].str());
    std::unique_lock lock(s.mutex);
    fn(s, lock, res);
  }

  void routes() {
    server.set_exception_handler([](const httplib::Request &, httplib::Response &res,
                                    std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error &e) {
        send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
      } catch (const NotFound &e) {
        send_error(res, 404, "not_found", e.what());
      } catch (const nlohmann::json::exception &e) {
        send_error(res, 400, "input", e.what());
      } catch (const std::exception &e) {
        send_error(res, 500, "internal", e.what());
      }
    });
    server.set_logger([](const httplib::Request &req, const httplib::Response &res) {
      spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
    });

    server.Get("/scenes", [this](const httplib::Request &, httplib::Response &res) {
      Json out = Json::array();
      for (const std::string &id : ids()) {
        Session &s = session(id);
        std::lock_guard lock(s.mutex);
        Json objects = Json::array();
        for (const auto &o : s.scene.objects()) objects.push_back(o.id);
        std::size_t verified = 0;
        for (const auto &[frame, labels] : s.scene.labels()) {
          for (const auto &[obj, label] : labels) verified += label.status == LabelStatus::kVerified;
        }
        const double slots =
            static_cast<double>(s.scene.frame_count()) * static_cast<double>(s.scene.objects().size());
        out.push_back({{"id", id},
                       {"frame_count", s.scene.frame_count()},
                       {"objects", objects},
                       {"review_progress", slots > 0 ? verified / slots : 0.0}});
      }
      send_json(res, out);
    });

    server.Post(R"(/scenes/([^/]+)/lock)", [this](const httplib::Request &req,
                                                  httplib::Response &res) {
      with_session(req, res, [](Session &s, auto &, httplib::Response &r) {
        if (!s.token.empty()) throw ConflictError("scene is locked by another client");
        s.token = new_token();
        send_json(r, {{"token", s.token}});
      });
    });

    server.Post(R"(/scenes/([^/]+)/unlock)", [this](const httplib::Request &req,
                                                    httplib::Response &res) {
      with_session(req, res, [&req](Session &s, auto &, httplib::Response &r) {
        if (s.token.empty() || req.get_header_value(kLockHeader) != s.token) {
          throw ConflictError("missing or wrong lock token for this scene");
        }
        s.token.clear();
        send_json(r, {{"unlocked", true}});
      });
    });

    server.Get(R"(/scenes/([^/]+)/status)", [this](const httplib::Request &req,
                                                   httplib::Response &res) {
      with_session(req, res, [](Session &s, auto &, httplib::Response &r) {
        const Scene &scene = s.scene;
        Json frames = Json::array();
        for (int f = 0; f < scene.frame_count(); ++f) {
          Json labels = Json::object();
          if (const auto *fl = scene.frame_labels(f)) {
            for (const auto &[obj, label] : *fl) {
              labels[obj] = {{"status", to_string(label.status)},
                             {"inlier_rmse", label.inlier_rmse},
                             {"inlier_ratio", label.inlier_ratio},
                             {"flagged", needs_review(label, scene.gates())}};
            }
          }
          frames.push_back({{"frame", f}, {"labels", labels}});
        }
        send_json(r, {{"scene", scene.id()},
                      {"frame_count", scene.frame_count()},
                      {"locked", !s.token.empty()},
                      {"dirty", scene.dirty_frames()},
                      {"last_saved", s.last_saved ? Json(*s.last_saved) : Json(nullptr)},
                      {"gates", {{"rmse_gate", scene.gates().rmse_gate},
                                 {"inlier_gate", scene.gates().inlier_gate}}},
                      {"job", s.job ? s.job->to_json() : Json(nullptr)},
                      {"frames", frames}});
      });
    });

    server.Get(R"(/scenes/([^/]+)/frames/(-?\d+)/cloud)", [this](const httplib::Request &req,
                                                                  httplib::Response &res) {
      const int frame = frame_param(req, 2);
      int stride = 1;
      if (req.has_param("stride")) {
        try {
          stride = std::stoi(req.get_param_value("stride"));
        } catch (const std::exception &) {
          throw InputError("stride must be an integer");
        }
      }
      if (stride < 1) throw InputError("stride must be >= 1");
      PointCloud cloud;
      with_session(req, res, [&](Session &s, auto &lock, httplib::Response &) {
        require_frame(s.scene, frame);
        // Frame data is immutable once served; only labels change under the lock.
        lock.unlock();
        cloud = s.scene.cloud(frame, stride);
      });
      static_assert(std::endian::native == std::endian::little);
      const auto count = static_cast<std::uint32_t>(cloud.size());
      std::string body(4 + count * 12 + count * 3, '\0');
      std::memcpy(body.data(), &count, 4);
      char *xyz = body.data() + 4;
      char *rgb = xyz + count * 12;
      for (std::uint32_t i = 0; i < count; ++i) {
        const float p[3] = {static_cast<float>(cloud.points[i].x()),
                            static_cast<float>(cloud.points[i].y()),
                            static_cast<float>(cloud.points[i].z())};
        std::memcpy(xyz + i * 12, p, 12);
        for (int c = 0; c < 3; ++c) {
          const double v = cloud.has_colors() ? cloud.colors[i][c] : 0.8;
          rgb[i * 3 + c] = static_cast<char>(static_cast<std::uint8_t>(
              std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
      }
      res.set_content(body, "application/octet-stream");
    });

    server.Get(R"(/scenes/([^/]+)/frames/(-?\d+)/labels/([^/]+))",
               [this](const httplib::Request &req, httplib::Response &res) {
                 const int frame = frame_param(req, 2);
                 const std::string object_id = req.matches[3].str();
                 with_session(req, res, [&](Session &s, auto &, httplib::Response &r) {
                   require_frame(s.scene, frame);
                   if (!s.scene.has_object(object_id)) {
                     throw NotFound("unknown object '" + object_id + "'");
                   }
                   const auto label = s.scene.label(frame, object_id);
                   if (!label) throw NotFound("no label for this frame and object");
                   send_json(r, label_to_json(*label));
                 });
               });

    server.Put(R"(/scenes/([^/]+)/frames/(-?\d+)/labels/([^/]+))",
               [this](const httplib::Request &req, httplib::Response &res) {
                 const int frame = frame_param(req, 2);
                 const std::string object_id = req.matches[3].str();
                 const Json body = parse_body(req);
                 const Pose pose = pose_from_json(body).canonical();
                 JointAngles joints;
                 if (body.contains("joints")) joints = body["joints"].get<JointAngles>();
                 with_session(req, res, [&](Session &s, auto &, httplib::Response &r) {
                   s.require_lock(req);
                   require_frame(s.scene, frame);
                   if (!s.scene.has_object(object_id)) {
                     throw NotFound("unknown object '" + object_id + "'");
                   }
                   send_json(r, label_to_json(edit_label(s.scene, frame, object_id, pose, joints)));
                 });
               });

    server.Post(R"(/scenes/([^/]+)/frames/(-?\d+)/refine/([^/]+))",
                [this](const httplib::Request &req, httplib::Response &res) {
                  const int frame = frame_param(req, 2);
                  const std::string object_id = req.matches[3].str();
                  with_session(req, res, [&](Session &s, auto &, httplib::Response &r) {
                    s.require_lock(req);
                    require_frame(s.scene, frame);
                    if (!s.scene.has_object(object_id)) {
                      throw NotFound("unknown object '" + object_id + "'");
                    }
                    const FrameLabel label = refine_stored(s.scene, frame, object_id);
                    send_json(r, label_json(label, s.scene.gates()));
                  });
                });

    server.Post(R"(/scenes/([^/]+)/frames/(-?\d+)/review)",
                [this](const httplib::Request &req, httplib::Response &res) {
                  const int frame = frame_param(req, 2);
                  const Json body = parse_body(req);
                  const std::string object_id = body.at("object").get<std::string>();
                  const std::string verdict = body.at("verdict").get<std::string>();
                  if (verdict != "verified" && verdict != "rejected") {
                    throw InputError("verdict must be \"verified\" or \"rejected\"");
                  }
                  with_session(req, res, [&](Session &s, auto &, httplib::Response &r) {
                    s.require_lock(req);
                    require_frame(s.scene, frame);
                    const FrameLabel label =
                        review_label(s.scene, frame, object_id, verdict == "verified");
                    send_json(r, label_json(label, s.scene.gates()));
                  });
                });

    server.Post(R"(/scenes/([^/]+)/save)", [this](const httplib::Request &req,
                                                  httplib::Response &res) {
      with_session(req, res, [&req](Session &s, auto &, httplib::Response &r) {
        s.require_lock(req);
        const Json frames = s.scene.dirty_frames();
        s.scene.save();
        s.last_saved = utc_now();
        send_json(r, {{"saved", frames}, {"last_saved", *s.last_saved}});
      });
    });

    server.Post(R"(/scenes/([^/]+)/propagate)", [this](const httplib::Request &req,
                                                       httplib::Response &res) {
      const Json body = parse_body(req);
      const std::string object_id = body.at("object").get<std::string>();
      const int from = body.at("from").get<int>();
      const int to = body.at("to").get<int>();
      Session &s = session(req.matches[1].str());
      std::shared_ptr<Job> job;
      {
        std::lock_guard lock(s.mutex);
        s.require_lock(req);
        check_propagation(s.scene, object_id, from, to);
        if (s.job && s.job->thread.joinable()) s.job->thread.join();
        job = std::make_shared<Job>();
        job->id = s.next_job_id++;
        job->object_id = object_id;
        job->from = from;
        job->to = to;
        job->total = std::abs(to - from);
        s.job = job;
        job->thread = std::thread(&Impl::run_job, this, &s, job, Scene(s.scene));
      }
      res.set_chunked_content_provider(
          "text/event-stream",
          [&s, job, next = std::size_t{0}](std::size_t, httplib::DataSink &sink) mutable {
            std::unique_lock lock(s.mutex);
            s.changed.wait_for(lock, std::chrono::milliseconds(200),
                               [&] { return next < job->events.size() || job->finished; });
            while (next < job->events.size()) {
              const std::string event = job->events[next++];
              lock.unlock();
              if (!sink.write(event.data(), event.size())) return false;
              lock.lock();
            }
            if (job->finished) {
              lock.unlock();
              sink.done();
            }
            return true;
          });
    });

    server.Get(R"(/scenes/([^/]+)/job)", [this](const httplib::Request &req,
                                                httplib::Response &res) {
      with_session(req, res, [](Session &s, auto &, httplib::Response &r) {
        if (!s.job) throw NotFound("no propagation job has run on this scene");
        send_json(r, s.job->to_json());
      });
    });

    server.Post(R"(/scenes/([^/]+)/job/cancel)", [this](const httplib::Request &req,
                                                        httplib::Response &res) {
      with_session(req, res, [&req](Session &s, auto &, httplib::Response &r) {
        if (s.token.empty() || req.get_header_value(kLockHeader) != s.token) {
          throw ConflictError("missing or wrong lock token for this scene");
        }
        if (!s.job) throw NotFound("no propagation job has run on this scene");
        s.job->stop.request_stop();
        send_json(r, s.job->to_json());
      });
    });

    if (options.ui_dir && !server.set_mount_point("/", options.ui_dir->string())) {
      throw IoError("cannot serve UI assets from " + options.ui_dir->string());
    }
  }

  // Registration runs on a private copy so readers never wait on it; each
  // finished frame is published into the shared scene.
  void run_job(Session *s, std::shared_ptr<Job> job, Scene work) {
    PropagateOptions opts;
    opts.refine.icp.max_iterations = 50;
    opts.stop = job->stop.get_token();
    opts.on_step = [&](const PropagationStep &step) {
      std::lock_guard lock(s->mutex);
      s->scene.put_label(step.frame, step.label);
      ++job->frames_done;
      job->flagged += step.flagged;
      job->events.push_back(sse("progress", {{"frame", step.frame},
                                             {"status", to_string(step.label.status)},
                                             {"rmse", step.label.inlier_rmse},
                                             {"inlier_ratio", step.label.inlier_ratio},
                                             {"flagged", step.flagged}}));
      s->changed.notify_all();
    };
    std::string state = "done";
    std::string error;
    try {
      propagate(work, job->object_id, job->from, job->to, opts);
      if (job->stop.stop_requested() && job->frames_done < job->total) state = "cancelled";
    } catch (const std::exception &e) {
      state = "failed";
      error = e.what();
      spdlog::error("propagation job {} failed: {}", job->id, error);
    }
    std::lock_guard lock(s->mutex);
    job->state = state;
    job->error = error;
    job->finished = true;
    job->events.push_back(sse("done", job->to_json()));
    s->changed.notify_all();
  }

  std::vector<std::string> ids() const {
    std::lock_guard lock(sessions_mutex);
    std::vector<std::string> out;
    for (const auto &[id, s] : sessions) out.push_back(id);
    return out;
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  const fs::path &root = impl_->options.data_root;
  if (root.empty()) return;
  if (!fs::is_directory(root)) throw IoError("data root " + root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto &entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto &dir : dirs) add_scene(dir);
}

Service::~Service() = default;

std::string Service::add_scene(const fs::path &root) {
  auto session = std::make_unique<Session>(Scene::open(root));
  const std::string id = session->scene.id();
  std::lock_guard lock(impl_->sessions_mutex);
  if (impl_->sessions.count(id)) throw ConflictError("scene id '" + id + "' is already served");
  impl_->sessions.emplace(id, std::move(session));
  spdlog::info("serving scene '{}' from {}", id, root.string());
  return id;
}

std::vector<std::string> Service::scene_ids() const { return impl_->ids(); }

int Service::bind_to_any_port(const std::string &host) {
  return impl_->server.bind_to_any_port(host);
}

bool Service::bind(const std::string &host, int port) {
  return impl_->server.bind_to_port(host, port);
}

bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

void Service::stop() { impl_->server.stop(); }

}  // namespace dtt
