#pragma once

#include "forge/study_service.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace forge {

/// JSON-over-HTTP front end for StudyService:
///   POST /api/session              {participant_label, mode} -> {token, mode}
///   GET  /api/item/next            (bearer) -> payload | {"exhausted": true}
///   POST /api/item/<id>/answer     (bearer) {letter} -> {ok, duplicate}
///   POST /api/item/<id>/vet        (bearer) {decision, reason, note} -> {ok}
///   GET  /api/stats                -> human accuracy report
///   GET  /images/<id>/view1.png|view2.png
/// plus an optional static mount at "/" for the browser bundle.
class StudyServer {
public:
  StudyServer(StudyService &service, std::filesystem::path manifest_dir,
              std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~StudyServer();

  /// Binds and returns the port (0 picks a free one); throws on failure.
  int bind(const std::string &host, int port);
  /// Blocks serving requests until stop().
  void serve();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace forge
