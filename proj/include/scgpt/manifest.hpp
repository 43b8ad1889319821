// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "scgpt/error.hpp"
#include "scgpt/text.hpp"

namespace scgpt {

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// FNV-1a over the file bytes, as 16 hex digits.
inline std::string hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot hash missing file " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf{};
  while (f) {
    f.read(buf.data(), buf.size());
    h = text::fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(f.gcount())), h);
  }
  return hex64(h);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// `git describe --always --dirty` of the working directory, or "unknown".
inline std::string git_describe() {
  std::string out;
  if (FILE* p = popen("git describe --always --dirty 2>/dev/null", "r")) {
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), p)) out += buf.data();
    pclose(p);
  }
  const auto t = text::trim(out);
  return t.empty() ? "unknown" : std::string(t);
}

struct FileHash {
  std::string path;
  std::string fnv1a64;

  friend bool operator==(const FileHash&, const FileHash&) = default;
};

// Everything needed to re-run a command: the argument vector, the resolved
// configuration, the seed, and hashes of inputs and outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<FileHash> inputs;
  std::vector<FileHash> outputs;
  std::string git_describe;
  std::string started_at;
  std::string finished_at;
  std::size_t threads = 1;

  void add_input(const std::string& path) { inputs.push_back({path, hash_file(path)}); }
  void add_output(const std::string& path) { outputs.push_back({path, hash_file(path)}); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "scgpt-manifest-v1";
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["seed"] = seed;
    j["threads"] = threads;
    auto files = [](const std::vector<FileHash>& v) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& f : v) a.push_back({{"path", f.path}, {"fnv1a64", f.fnv1a64}});
      return a;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    j["git_describe"] = git_describe;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at.empty() ? nlohmann::json(nullptr) : nlohmann::json(finished_at);
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "scgpt-manifest-v1") throw ParseError("not an scgpt-manifest-v1 document", 0, "");
    RunManifest m;
    try {
      m.command = j.at("command").get<std::string>();
      m.argv = j.at("argv").get<std::vector<std::string>>();
      m.config = j.at("config");
      m.seed = j.at("seed").get<std::uint64_t>();
      m.threads = j.value("threads", std::size_t{1});
      for (const auto& f : j.at("inputs")) m.inputs.push_back({f.at("path"), f.at("fnv1a64")});
      for (const auto& f : j.at("outputs")) m.outputs.push_back({f.at("path"), f.at("fnv1a64")});
      m.git_describe = j.value("git_describe", "");
      m.started_at = j.value("started_at", "");
      if (j.contains("finished_at") && j["finished_at"].is_string()) m.finished_at = j["finished_at"];
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed manifest: ") + e.what(), 0, "");
    }
    return m;
  }

  void write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write manifest " + path);
    f << to_json().dump(2) << '\n';
    if (!f) throw IoError("failed writing manifest " + path);
  }

  static RunManifest read(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), 0, "");
    }
    return from_json(j);
  }
};

}  // namespace scgpt
