#include "forge/jsonl.hpp"

#include "forge/error.hpp"

#include <fstream>
#include <unistd.h>

namespace forge {

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error &e) {
      // A torn final line (crash mid-append) is skipped; anything earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) {
        break;
      }
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path &path, const std::vector<nlohmann::json> &records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (const auto &r : records) {
    out << dump_canonical(r) << '\n';
  }
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

JsonlAppender::JsonlAppender(const std::filesystem::path &path) : path_(path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  file_ = std::fopen(path.c_str(), "ab");
  if (file_ == nullptr) {
    throw IoError("cannot open log " + path.string());
  }
}

JsonlAppender::~JsonlAppender() {
  if (file_ != nullptr) {
    std::fclose(file_);
  }
}

void JsonlAppender::append(const nlohmann::json &record) {
  const std::string line = dump_canonical(record) + "\n";
  std::lock_guard lock(mu_);
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0 ||
      ::fsync(::fileno(file_)) != 0) {
    throw IoError("append failed: " + path_.string());
  }
}

std::string dump_canonical(const nlohmann::json &j) {
  // nlohmann::json objects are std::map-backed, so keys come out sorted.
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

} // namespace forge
