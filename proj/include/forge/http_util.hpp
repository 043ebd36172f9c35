#pragma once

#include <string>

namespace forge::http {

/// "http://host:8080/v1" -> {"http://host:8080", "/v1"}. The path part never
/// ends with '/'.
struct UrlParts {
  std::string origin;
  std::string path;
};

UrlParts split_url(const std::string &url);

} // namespace forge::http
