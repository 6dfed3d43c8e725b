#include "pancsynth/turing_server.hpp"

#include <httplib.h>

#include "pancsynth/manifest.hpp"

namespace pancsynth::turing {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, {{"error", message}}, status);
}

int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::bad_request: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: break;
  }
  return 409;
}

json next_to_json(const std::string& id, const NextItem& n) {
  json j{{"session_id", id},
         {"status", n.status == Status::active ? "active" : "complete"},
         {"answered", n.answered},
         {"total", n.total}};
  if (n.status == Status::active) {
    j["item_id"] = n.item_id;
    j["position"] = n.answered + 1;
    j["image_url"] = "/sessions/" + id + "/items/" + std::to_string(n.item_id) + "/image";
  }
  return j;
}

// Maps service, invariant and parse failures onto HTTP status codes.
template <typename F>
httplib::Server::Handler guarded(F&& f) {
  return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      send_error(res, http_status(e.kind()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("malformed request: ") + e.what());
    } catch (const InvariantError& e) {
      send_error(res, 400, e.what());
    } catch (const IoError& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

Server::Server(ServerOptions opts)
    : opts_(std::move(opts)), store_(opts_.data_dir), http_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Server::~Server() { stop(); }

void Server::install_routes() {
  auto& s = *http_;

  s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body);
    const auto opts = options_from_json(body);
    const auto real = Manifest::read(body.at("real_manifest").get<std::string>());
    const auto synth = Manifest::read(body.at("synth_manifest").get<std::string>());
    const auto id = store_.create(real, synth, opts);
    const auto n = store_.next(id);
    send_json(res, {{"session_id", id}, {"total", n.total}}, 201);
  }));

  s.Get(R"(/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    const auto snap = store_.snapshot(id);
    const auto n = store_.next(id);
    auto j = next_to_json(id, n);
    j["overlay"] = snap.options.overlay;
    j["finalized"] = snap.finalized;
    send_json(res, j);
  }));

  s.Get(R"(/sessions/([0-9a-f]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto id = req.matches[1].str();
    send_json(res, next_to_json(id, store_.next(id)));
  }));

  s.Get(R"(/sessions/([0-9a-f]+)/items/(\d+)/image)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto png = store_.item_image(req.matches[1].str(), std::stoi(req.matches[2].str()));
          res.set_content(std::string(png.begin(), png.end()), "image/png");
        }));

  s.Post(R"(/sessions/([0-9a-f]+)/responses)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto id = req.matches[1].str();
           const auto body = json::parse(req.body);
           Response r;
           r.item_id = body.at("item_id").get<int>();
           r.judgment = parse_truth(body.at("judgment").get<std::string>());
           r.confidence = body.at("confidence").get<double>();
           r.elapsed_ms = body.value("elapsed_ms", std::int64_t{0});
           const auto n = store_.submit(id, r);
           auto j = next_to_json(id, n);
           j["accepted"] = true;
           send_json(res, j);
         }));

  s.Post(R"(/sessions/([0-9a-f]+)/finalize)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto id = req.matches[1].str();
           store_.finalize(id);
           send_json(res, next_to_json(id, store_.next(id)));
         }));

  s.Get(R"(/sessions/([0-9a-f]+)/results)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto id = req.matches[1].str();
          const auto result = store_.results(id);
          send_json(res, study_result_to_json(result, store_.snapshot(id)));
        }));

  if (!opts_.ui_dir.empty() && !s.set_mount_point("/", opts_.ui_dir.string()))
    throw IoError("reader UI directory not found: " + opts_.ui_dir.string());
}

int Server::bind() {
  if (opts_.port == 0) {
    const int port = http_->bind_to_any_port(opts_.host);
    if (port < 0) throw IoError("cannot bind " + opts_.host);
    return port;
  }
  if (!http_->bind_to_port(opts_.host, opts_.port))
    throw IoError("cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
  return opts_.port;
}

void Server::serve() { http_->listen_after_bind(); }

void Server::stop() {
  if (http_) http_->stop();
}

}  // namespace pancsynth::turing
