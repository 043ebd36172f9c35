#include "forge/study_http.hpp"

#include "forge/png_io.hpp"

#include <httplib.h>

namespace forge {
namespace {

void send_json(httplib::Response &res, int status, const nlohmann::json &body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string bearer(const httplib::Request &req) {
  const std::string h = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  return h.rfind(prefix, 0) == 0 ? h.substr(prefix.size()) : std::string();
}

nlohmann::json parse_body(const httplib::Request &req) {
  try {
    auto j = nlohmann::json::parse(req.body.empty() ? std::string("{}") : req.body);
    if (!j.is_object()) {
      throw StudyError(StudyError::Kind::kValidation, "request body must be a JSON object");
    }
    return j;
  } catch (const nlohmann::json::parse_error &) {
    throw StudyError(StudyError::Kind::kValidation, "request body is not valid JSON");
  }
}

std::string string_field(const nlohmann::json &j, const char *name, bool required = true) {
  if (!j.contains(name)) {
    if (required) {
      throw StudyError(StudyError::Kind::kValidation, std::string("missing field \"") + name + "\"");
    }
    return {};
  }
  if (!j[name].is_string()) {
    throw StudyError(StudyError::Kind::kValidation, std::string("field \"") + name + "\" must be a string");
  }
  return j[name].get<std::string>();
}

} // namespace

struct StudyServer::Impl {
  StudyService &service;
  std::filesystem::path manifest_dir;
  httplib::Server server;

  Impl(StudyService &s, std::filesystem::path dir) : service(s), manifest_dir(std::move(dir)) {}

  template <typename F> void guarded(httplib::Response &res, F &&f) {
    try {
      f();
    } catch (const StudyError &e) {
      send_json(res, e.http_status(), {{"error", e.what()}});
    } catch (const std::exception &e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  }
};

StudyServer::StudyServer(StudyService &service, std::filesystem::path manifest_dir,
                         std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service, std::move(manifest_dir))) {
  Impl &im = *impl_;
  auto &srv = im.server;

  srv.Post("/api/session", [&im](const httplib::Request &req, httplib::Response &res) {
    im.guarded(res, [&] {
      const auto body = parse_body(req);
      const StudyMode mode = study_mode_from_string(string_field(body, "mode", false).empty() ? "study" : string_field(body, "mode"));
      const std::string token = im.service.create_session(string_field(body, "participant_label"), mode);
      send_json(res, 200, {{"token", token}, {"mode", to_string(mode)}});
    });
  });

  srv.Get("/api/item/next", [&im](const httplib::Request &req, httplib::Response &res) {
    im.guarded(res, [&] {
      const auto payload = im.service.next_item(bearer(req));
      send_json(res, 200, payload ? *payload : nlohmann::json{{"exhausted", true}});
    });
  });

  srv.Post(R"(/api/item/([^/]+)/answer)", [&im](const httplib::Request &req, httplib::Response &res) {
    im.guarded(res, [&] {
      const std::string token = bearer(req);
      if (!im.service.session(token)) {
        throw StudyError(StudyError::Kind::kAuth, "unknown or missing session token");
      }
      const auto body = parse_body(req);
      const AnswerAck ack = im.service.record_answer(token, req.matches[1], string_field(body, "letter"));
      send_json(res, 200, {{"ok", true}, {"duplicate", ack.duplicate}});
    });
  });

  srv.Post(R"(/api/item/([^/]+)/vet)", [&im](const httplib::Request &req, httplib::Response &res) {
    im.guarded(res, [&] {
      const std::string token = bearer(req);
      if (!im.service.session(token)) {
        throw StudyError(StudyError::Kind::kAuth, "unknown or missing session token");
      }
      const auto body = parse_body(req);
      im.service.record_vet(token, req.matches[1], string_field(body, "decision"), string_field(body, "reason", false),
                            string_field(body, "note", false));
      send_json(res, 200, {{"ok", true}});
    });
  });

  srv.Get("/api/stats", [&im](const httplib::Request &, httplib::Response &res) {
    im.guarded(res, [&] { send_json(res, 200, im.service.human_stats()); });
  });

  srv.Get(R"(/images/([^/]+)/(view1|view2)\.png)", [&im](const httplib::Request &req, httplib::Response &res) {
    im.guarded(res, [&] {
      const BenchmarkItem *item = im.service.manifest().find(req.matches[1]);
      if (item == nullptr) {
        throw StudyError(StudyError::Kind::kNotFound, "unknown pair");
      }
      const auto path = im.manifest_dir / (req.matches[2] == "view1" ? item->view1 : item->view2);
      const auto bytes = png::read_file(path);
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });
  });

  if (static_dir) {
    srv.set_mount_point("/", static_dir->string());
  }
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string &host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) {
      throw Error("cannot bind " + host);
    }
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void StudyServer::serve() { impl_->server.listen_after_bind(); }

void StudyServer::stop() { impl_->server.stop(); }

} // namespace forge
