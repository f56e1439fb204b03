#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dtt {

struct ServiceOptions {
  // Subdirectories holding a meta.json are served as scenes. Empty: only
  // scenes added with add_scene().
  std::filesystem::path data_root;
  std::optional<std::filesystem::path> ui_dir;  // static assets served at /
};

// HTTP annotation service. Every mutation needs the scene's lock token in the
// X-Lock-Token header (obtained from POST /scenes/{id}/lock); status changes
// go through the labeling state machine.
//
// Routes:
//   GET  /scenes
//   POST /scenes/{id}/lock                      -> {"token"}
//   POST /scenes/{id}/unlock
//   GET  /scenes/{id}/status
//   GET  /scenes/{id}/frames/{n}/cloud?stride=k -> binary block
//   GET  /scenes/{id}/frames/{n}/labels/{object}
//   PUT  /scenes/{id}/frames/{n}/labels/{object} {"q","t","joints"?}
//   POST /scenes/{id}/frames/{n}/refine/{object}
//   POST /scenes/{id}/frames/{n}/review {"object","verdict"}
//   POST /scenes/{id}/propagate {"object","from","to"} -> event stream
//   GET  /scenes/{id}/job
//   POST /scenes/{id}/job/cancel
//   POST /scenes/{id}/save
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service &) = delete;
  Service &operator=(const Service &) = delete;

  // Loads a scene directory; its id is the directory name. Returns the id.
  std::string add_scene(const std::filesystem::path &root);
  std::vector<std::string> scene_ids() const;

  // Binds to a free port and returns it; serve with listen_after_bind().
  int bind_to_any_port(const std::string &host = "127.0.0.1");
  bool bind(const std::string &host, int port);
  // Blocks until stop().
  bool listen_after_bind();
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dtt
