#include "forge/http_util.hpp"

namespace forge::http {

UrlParts split_url(const std::string &url) {
  UrlParts parts;
  const auto scheme = url.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  if (slash == std::string::npos) {
    parts.origin = url;
  } else {
    parts.origin = url.substr(0, slash);
    parts.path = url.substr(slash);
  }
  while (!parts.path.empty() && parts.path.back() == '/') {
    parts.path.pop_back();
  }
  return parts;
}

} // namespace forge::http
