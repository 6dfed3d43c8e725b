#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "pancsynth/turing.hpp"

namespace httplib {
class Server;
}

namespace pancsynth::turing {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "turing_sessions";
  std::filesystem::path ui_dir;  // static reader UI bundle, optional
};

/// HTTP+JSON front end of SessionStore:
///   POST /sessions                      create (admin payload, see README)
///   GET  /sessions/{id}                 progress, no truth
///   GET  /sessions/{id}/next            current item
///   GET  /sessions/{id}/items/{n}/image PNG slice
///   POST /sessions/{id}/responses       submit a judgment
///   POST /sessions/{id}/finalize        end early
///   GET  /sessions/{id}/results         StudyResult (complete sessions only)
class Server {
 public:
  explicit Server(ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the socket and returns the bound port.
  int bind();
  /// Serves until stop(); call after bind().
  void serve();
  void stop();

  SessionStore& store() { return store_; }

 private:
  void install_routes();

  ServerOptions opts_;
  SessionStore store_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace pancsynth::turing
