#include "medi/pipeline/ledger.hpp"

#include "medi/error.hpp"
#include "medi/pipeline/hash.hpp"

#include <fstream>
#include <map>

namespace medi::pipeline {

namespace fs = std::filesystem;

RunLedger::RunLedger(fs::path run_dir) : dir_(fs::absolute(run_dir)) {
  fs::create_directories(dir_);
  std::ifstream in(dir_ / "ledger.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    entries_.push_back({j.at("seq").get<long>(), j.at("kind").get<std::string>(), j.value("path", ""),
                        j.value("sha256", ""), j.value("info", nlohmann::json{})});
  }
}

std::string RunLedger::relative(const fs::path& p) const {
  const fs::path abs = p.is_absolute() ? p : dir_ / p;
  return fs::relative(abs, dir_).generic_string();
}

const LedgerEntry& RunLedger::append(LedgerEntry e) {
  e.seq = static_cast<long>(entries_.size());
  nlohmann::json j{{"seq", e.seq}, {"kind", e.kind}};
  if (!e.path.empty()) {
    j["path"] = e.path;
    j["sha256"] = e.sha256;
  }
  if (!e.info.is_null()) j["info"] = e.info;
  std::ofstream out(dir_ / "ledger.jsonl", std::ios::app);
  out << j.dump() << '\n';
  if (!out) throw Error("cannot append to " + (dir_ / "ledger.jsonl").string());
  entries_.push_back(std::move(e));
  return entries_.back();
}

const LedgerEntry& RunLedger::record(const std::string& kind, const fs::path& path, nlohmann::json info) {
  const fs::path abs = path.is_absolute() ? path : dir_ / path;
  return append({0, kind, relative(abs), sha256_file(abs), std::move(info)});
}

const LedgerEntry& RunLedger::status(const std::string& state, nlohmann::json info) {
  if (info.is_null()) info = nlohmann::json::object();
  info["state"] = state;
  return append({0, "status", "", "", std::move(info)});
}

const LedgerEntry* RunLedger::find(const fs::path& path) const {
  const std::string rel = relative(path);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->path == rel) return &*it;
  return nullptr;
}

std::vector<std::string> RunLedger::verify() const {
  std::map<std::string, std::string> latest;
  for (const auto& e : entries_)
    if (!e.path.empty()) latest[e.path] = e.sha256;
  std::vector<std::string> bad;
  for (const auto& [path, sha] : latest) {
    const fs::path abs = dir_ / path;
    if (!fs::exists(abs) || sha256_file(abs) != sha) bad.push_back(path);
  }
  return bad;
}

}  // namespace medi::pipeline
