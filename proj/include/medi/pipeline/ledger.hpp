#pragma once

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace medi::pipeline {

struct LedgerEntry {
  long seq = 0;
  std::string kind;  // config, checkpoint, manifest, plan, report, status
  std::string path;  // relative to the run directory; empty for status rows
  std::string sha256;
  nlohmann::json info;
};

// Append-only record of a run directory. Every artifact is stored with its
// content hash; nothing is ever rewritten.
class RunLedger {
 public:
  explicit RunLedger(std::filesystem::path run_dir);

  const std::filesystem::path& run_dir() const { return dir_; }

  // Hashes `path` (absolute or relative to the run dir) and appends a row.
  const LedgerEntry& record(const std::string& kind, const std::filesystem::path& path, nlohmann::json info = {});
  const LedgerEntry& status(const std::string& state, nlohmann::json info = {});

  const std::vector<LedgerEntry>& entries() const { return entries_; }

  // Latest entry for `path`, or nullptr.
  const LedgerEntry* find(const std::filesystem::path& path) const;

  // Paths whose file is missing or whose hash no longer matches the
  // latest entry. Empty means the run directory is intact.
  std::vector<std::string> verify() const;

 private:
  const LedgerEntry& append(LedgerEntry e);
  std::string relative(const std::filesystem::path& p) const;

  std::filesystem::path dir_;
  std::vector<LedgerEntry> entries_;
};

}  // namespace medi::pipeline
