#include "medi/split.hpp"

#include "medi/random.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <set>

namespace medi::split {

using registry::DatasetManifest;
using registry::PatchRecord;

namespace {

Combination combination_of(const PatchRecord& r, const std::vector<std::string>& axes) {
  Combination c;
  c.reserve(axes.size());
  for (const auto& a : axes) c.push_back(r.attribute(a));
  return c;
}

std::set<std::string> sites_of(const DatasetManifest& m) {
  std::set<std::string> s;
  for (const auto& r : m.records) s.insert(r.site);
  return s;
}

}  // namespace

std::size_t holdout_count(std::size_t observed, double fraction) {
  auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(observed) + 1e-9));
  if (n == 0 && observed >= 2) n = 1;
  return n;
}

HoldoutSplit holdout_split(const DatasetManifest& manifest, double fraction, const std::vector<std::string>& axes,
                           std::uint64_t seed, const std::vector<std::string>& reserved_sites) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error("holdout fraction must lie in (0, 1), got " + std::to_string(fraction));
  if (axes.empty()) throw Error("holdout split needs at least one axis");
  for (const auto& a : axes)
    if (a == "class" || !manifest.schema.has_attribute(a)) throw Error("unknown split axis '" + a + "'");

  const std::set<std::string> reserved(reserved_sites.begin(), reserved_sites.end());
  std::map<std::string, std::set<Combination>> observed;
  for (const auto& r : manifest.records)
    if (!reserved.contains(r.site)) observed[r.class_label].insert(combination_of(r, axes));

  HoldoutSplit out;
  out.axes = axes;
  out.fraction = fraction;
  out.seed = seed;
  out.reserved_sites.assign(reserved.begin(), reserved.end());

  std::map<std::string, std::set<Combination>> excluded;
  for (const auto& [cls, combos] : observed) {
    std::vector<Combination> pool(combos.begin(), combos.end());
    std::mt19937_64 rng(derive_seed(seed, cls));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n = holdout_count(pool.size(), fraction);
    std::set<Combination> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    out.excluded[cls].assign(chosen.begin(), chosen.end());
    excluded[cls] = std::move(chosen);
  }

  std::vector<PatchRecord> train, holdout;
  for (const auto& r : manifest.records) {
    const bool held = reserved.contains(r.site) || excluded[r.class_label].contains(combination_of(r, axes));
    (held ? holdout : train).push_back(r);
  }
  out.train = registry::subset_manifest(manifest, std::move(train));
  out.holdout = registry::subset_manifest(manifest, std::move(holdout));
  return out;
}

void write_holdout_split(const HoldoutSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  registry::save_manifest(split.train, dir / "train.tsv");
  registry::save_manifest(split.holdout, dir / "holdout.tsv");
  nlohmann::json j;
  j["seed"] = split.seed;
  j["fraction"] = split.fraction;
  j["axes"] = split.axes;
  j["reserved_sites"] = split.reserved_sites;
  j["excluded"] = split.excluded;
  j["train_records"] = split.train.size();
  j["holdout_records"] = split.holdout.size();
  std::ofstream out(dir / "split.json", std::ios::binary);
  out << j.dump(2) << '\n';
}

std::string CorrelatedTaskSplit::label() const {
  std::string s = task + "#" + std::to_string(run_id);
  for (const auto& c : classes) s += " " + c + "->" + assignment.at(c);
  return s;
}

std::map<std::string, std::vector<std::string>> candidate_sites(const DatasetManifest& train_pool,
                                                                const TaskSpec& task) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& r : train_pool.records) ++counts[r.class_label][r.site];
  const auto& site_vocab = train_pool.schema.vocabulary("site");
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& cls : task.classes) {
    std::vector<std::string>& sites = out[cls];
    for (const auto& [site, n] : counts[cls])
      if (n >= task.min_patches && n > 0) sites.push_back(site);
    std::sort(sites.begin(), sites.end(), [&](const std::string& a, const std::string& b) {
      return site_vocab.id_of(a) < site_vocab.id_of(b);
    });
  }
  return out;
}

namespace {

void check_task(const DatasetManifest& train_pool, const TaskSpec& task,
                const std::map<std::string, std::vector<std::string>>& candidates) {
  if (task.classes.empty()) throw Error("task '" + task.name + "' lists no classes");
  std::set<std::string> uniq(task.classes.begin(), task.classes.end());
  if (uniq.size() != task.classes.size()) throw Error("task '" + task.name + "' lists a class twice");
  std::set<std::string> all_sites;
  for (const auto& cls : task.classes) {
    if (!train_pool.schema.vocabulary("class").contains(cls))
      throw Error("task '" + task.name + "': class '" + cls + "' not in manifest");
    const auto& c = candidates.at(cls);
    if (c.empty()) throw Error("task '" + task.name + "': class '" + cls + "' has no site with enough patches");
    all_sites.insert(c.begin(), c.end());
  }
  if (all_sites.size() < task.classes.size())
    throw Error("task '" + task.name + "': " + std::to_string(all_sites.size()) + " distinct sites for " +
                std::to_string(task.classes.size()) + " classes; each class needs its own site");
}

CorrelatedTaskSplit materialize(const DatasetManifest& train_pool, const DatasetManifest& test_pool,
                                const TaskSpec& task, const std::map<std::string, std::string>& assignment,
                                std::size_t run_id) {
  CorrelatedTaskSplit s;
  s.task = task.name;
  s.run_id = run_id;
  s.classes = task.classes;
  s.assignment = assignment;
  const std::set<std::string> classes(task.classes.begin(), task.classes.end());
  const auto train_sites = sites_of(train_pool);
  std::vector<PatchRecord> train, test;
  for (const auto& r : train_pool.records) {
    if (!classes.contains(r.class_label)) continue;
    ++s.class_pool_sizes[r.class_label];
    if (assignment.at(r.class_label) == r.site) train.push_back(r);
  }
  std::set<std::string> test_sites;
  for (const auto& r : test_pool.records) {
    if (!classes.contains(r.class_label) || train_sites.contains(r.site)) continue;
    test.push_back(r);
    test_sites.insert(r.site);
  }
  s.train = registry::subset_manifest(train_pool, std::move(train));
  s.test = registry::subset_manifest(test_pool, std::move(test));
  s.test_sites.assign(test_sites.begin(), test_sites.end());
  return s;
}

// Depth-first search over injective maps in (class order, candidate order).
// `visit` returns false to stop the walk.
void walk_assignments(const std::vector<std::string>& classes,
                      const std::map<std::string, std::vector<std::string>>& candidates,
                      const std::function<bool(const std::map<std::string, std::string>&)>& visit) {
  std::map<std::string, std::string> current;
  std::set<std::string> used;
  std::function<bool(std::size_t)> rec = [&](std::size_t i) -> bool {
    if (i == classes.size()) return visit(current);
    for (const auto& site : candidates.at(classes[i])) {
      if (used.contains(site)) continue;
      used.insert(site);
      current[classes[i]] = site;
      const bool go_on = rec(i + 1);
      used.erase(site);
      current.erase(classes[i]);
      if (!go_on) return false;
    }
    return true;
  };
  rec(0);
}

}  // namespace

CorrelatedTaskSplit correlated_task_split(const DatasetManifest& train_pool, const DatasetManifest& test_pool,
                                          const TaskSpec& task, std::uint64_t seed) {
  auto candidates = candidate_sites(train_pool, task);
  check_task(train_pool, task, candidates);

  if (!task.assignment.empty()) {
    std::set<std::string> used;
    for (const auto& cls : task.classes) {
      const auto it = task.assignment.find(cls);
      if (it == task.assignment.end()) throw Error("task '" + task.name + "': no site assigned to '" + cls + "'");
      const auto& c = candidates.at(cls);
      if (std::find(c.begin(), c.end(), it->second) == c.end())
        throw Error("task '" + task.name + "': site '" + it->second + "' has too few '" + cls + "' patches");
      if (!used.insert(it->second).second)
        throw Error("task '" + task.name + "': site '" + it->second + "' assigned to two classes");
    }
    return materialize(train_pool, test_pool, task, task.assignment, 0);
  }

  std::mt19937_64 rng(derive_seed(seed, task.name));
  for (auto& [cls, sites] : candidates) std::shuffle(sites.begin(), sites.end(), rng);
  std::map<std::string, std::string> found;
  walk_assignments(task.classes, candidates, [&](const auto& a) {
    found = a;
    return false;
  });
  if (found.empty()) throw Error("task '" + task.name + "': no injective class-to-site assignment exists");
  return materialize(train_pool, test_pool, task, found, 0);
}

std::size_t count_assignments(const DatasetManifest& train_pool, const TaskSpec& task, std::size_t cap) {
  const auto candidates = candidate_sites(train_pool, task);
  std::size_t n = 0;
  walk_assignments(task.classes, candidates, [&](const auto&) { return ++n <= cap; });
  return n;
}

std::vector<CorrelatedTaskSplit> enumerate_runs(const DatasetManifest& train_pool, const DatasetManifest& test_pool,
                                                const TaskSpec& task, std::size_t max_runs) {
  const auto candidates = candidate_sites(train_pool, task);
  check_task(train_pool, task, candidates);
  const std::size_t total = count_assignments(train_pool, task, max_runs);
  if (total > max_runs)
    throw Error("task '" + task.name + "': more than " + std::to_string(max_runs) +
                " site assignments; raise the run cap or restrict the candidate sites");
  std::vector<CorrelatedTaskSplit> runs;
  walk_assignments(task.classes, candidates, [&](const auto& a) {
    runs.push_back(materialize(train_pool, test_pool, task, a, runs.size()));
    return true;
  });
  return runs;
}

}  // namespace medi::split
