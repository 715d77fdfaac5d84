// SPDX-License-Identifier: Apache-2.0
//
// Stage-wise command line front end and the run manifest kept in every output
// directory.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rco {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // I/O, lock held, training did not converge
  kExitConfig = 2,
  kExitEndpoint = 3,
  kExitData = 4,
};

/// Runs one command. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct FileDigest {
  std::string path;  // relative to the output directory when inside it
  std::string hash;  // FNV-1a of the bytes, 16 hex digits

  bool operator==(const FileDigest&) const = default;
};

/// Digest of a file; `path` is rewritten relative to `base` when it lies
/// inside it.
FileDigest digest_file(const std::filesystem::path& file, const std::filesystem::path& base);

struct StageEntry {
  std::string stage;
  std::string config_hash;
  std::string options;  // command-specific flags that change outputs
  std::uint64_t seed = 0;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::map<std::string, std::string> endpoints;  // role -> endpoint id
  std::map<std::string, std::string> stats;
  long failures = 0;
  std::string started_at;
  std::string finished_at;
};

/// manifest.json: one per output directory, one entry per stage run there.
class RunManifest {
 public:
  static constexpr const char* kFileName = "manifest.json";

  /// Empty manifest when the file does not exist. Throws ParseError when it is
  /// malformed.
  static RunManifest load(const std::filesystem::path& dir);
  void save(const std::filesystem::path& dir) const;

  const StageEntry* find(const std::string& stage) const;
  void put(StageEntry entry);
  const std::map<std::string, StageEntry>& stages() const { return stages_; }

 private:
  std::map<std::string, StageEntry> stages_;
};

/// True when `previous` ran with the same config hash, options and input
/// digests, had no failures, and its outputs are still on disk unchanged.
bool up_to_date(const StageEntry& previous, const StageEntry& planned, const std::filesystem::path& dir);

/// ISO-8601 UTC; $SOURCE_DATE_EPOCH when set, so reruns can be byte-identical.
std::string timestamp_now();

/// Exclusive lock on an output directory via an O_EXCL lock file.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  static constexpr const char* kFileName = ".rco.lock";

 private:
  std::filesystem::path path_;
};

}  // namespace rco
