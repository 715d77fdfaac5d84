// SPDX-License-Identifier: Apache-2.0
#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <ctime>

#include "json.hpp"
#include "rco/cli.hpp"
#include "rco/error.hpp"
#include "rco/hash.hpp"
#include "rco/records.hpp"

namespace rco {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

ojson to_json(const std::vector<FileDigest>& files) {
  auto arr = ojson::array();
  for (const auto& f : files) arr.push_back({{"path", f.path}, {"hash", f.hash}});
  return arr;
}

std::vector<FileDigest> digests_from(const ojson& arr) {
  std::vector<FileDigest> out;
  for (const auto& f : arr) out.push_back({f.at("path").get<std::string>(), f.at("hash").get<std::string>()});
  return out;
}

ojson to_json(const StageEntry& e) {
  ojson j;
  j["config_hash"] = e.config_hash;
  j["options"] = e.options;
  j["seed"] = e.seed;
  j["inputs"] = to_json(e.inputs);
  j["outputs"] = to_json(e.outputs);
  j["endpoints"] = e.endpoints;
  j["stats"] = e.stats;
  j["failures"] = e.failures;
  j["started_at"] = e.started_at;
  j["finished_at"] = e.finished_at;
  return j;
}

StageEntry entry_from(const std::string& stage, const ojson& j) {
  StageEntry e;
  e.stage = stage;
  e.config_hash = j.at("config_hash").get<std::string>();
  e.options = j.at("options").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.inputs = digests_from(j.at("inputs"));
  e.outputs = digests_from(j.at("outputs"));
  e.endpoints = j.at("endpoints").get<std::map<std::string, std::string>>();
  e.stats = j.at("stats").get<std::map<std::string, std::string>>();
  e.failures = j.at("failures").get<long>();
  e.started_at = j.at("started_at").get<std::string>();
  e.finished_at = j.at("finished_at").get<std::string>();
  return e;
}

}  // namespace

FileDigest digest_file(const fs::path& file, const fs::path& base) {
  const std::string bytes = read_file(file);
  std::string shown = file.generic_string();
  std::error_code ec;
  const fs::path abs_file = fs::weakly_canonical(file, ec);
  const fs::path abs_base = fs::weakly_canonical(base, ec);
  if (!ec) {
    const fs::path rel = abs_file.lexically_relative(abs_base);
    if (!rel.empty() && *rel.begin() != "..") shown = rel.generic_string();
  }
  return {shown, hex64(fnv1a64(bytes))};
}

RunManifest RunManifest::load(const fs::path& dir) {
  RunManifest m;
  const fs::path file = dir / kFileName;
  if (!fs::exists(file)) return m;
  try {
    const ojson doc = ojson::parse(read_file(file));
    for (const auto& [stage, entry] : doc.at("stages").items()) m.stages_[stage] = entry_from(stage, entry);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

void RunManifest::save(const fs::path& dir) const {
  ojson doc;
  doc["stages"] = ojson::object();
  for (const auto& [stage, e] : stages_) doc["stages"][stage] = to_json(e);
  write_file(dir / kFileName, doc.dump(2, ' ', false, ojson::error_handler_t::replace) + "\n");
}

const StageEntry* RunManifest::find(const std::string& stage) const {
  auto it = stages_.find(stage);
  return it == stages_.end() ? nullptr : &it->second;
}

void RunManifest::put(StageEntry entry) {
  std::string key = entry.stage;
  stages_[key] = std::move(entry);
}

bool up_to_date(const StageEntry& previous, const StageEntry& planned, const fs::path& dir) {
  if (previous.failures != 0 || previous.config_hash != planned.config_hash ||
      previous.options != planned.options || previous.inputs != planned.inputs || previous.outputs.empty())
    return false;
  for (const auto& out : previous.outputs) {
    const fs::path p = dir / out.path;
    if (!fs::exists(p) || digest_file(p, dir).hash != out.hash) return false;
  }
  return true;
}

std::string timestamp_now() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
    try {
      t = static_cast<std::time_t>(std::stoll(epoch));
    } catch (const std::exception&) {
      throw ConfigError("SOURCE_DATE_EPOCH must be an integer");
    }
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / kFileName) {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw IoError("output directory '" + dir.string() + "' is locked by another stage (remove " +
                  path_.string() + " if stale)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace rco
