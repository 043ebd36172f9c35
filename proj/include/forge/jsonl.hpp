#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace forge {

/// Reads every non-blank line as a JSON value. Throws IoError on a missing
/// file or a malformed line (message names the line number).
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path &path);

/// Overwrites `path` with one compact record per line.
void write_jsonl(const std::filesystem::path &path, const std::vector<nlohmann::json> &records);

/// Append-only log. append() returns only after the record is flushed and
/// fsync'ed, so an acknowledged write survives a restart.
class JsonlAppender {
public:
  explicit JsonlAppender(const std::filesystem::path &path);
  ~JsonlAppender();
  JsonlAppender(const JsonlAppender &) = delete;
  JsonlAppender &operator=(const JsonlAppender &) = delete;

  void append(const nlohmann::json &record);
  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
  std::FILE *file_ = nullptr;
  std::mutex mu_;
};

/// Deterministic serialization used for every artifact we hash or diff.
std::string dump_canonical(const nlohmann::json &j);

} // namespace forge
