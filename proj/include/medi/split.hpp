#pragma once

#include "medi/registry.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace medi::split {

// Values of the split axes for one record, e.g. {site, race}.
using Combination = std::vector<std::string>;

struct HoldoutSplit {
  registry::DatasetManifest train;
  registry::DatasetManifest holdout;
  // Per class, the held-out axis combinations (sorted).
  std::map<std::string, std::vector<Combination>> excluded;
  // Sites moved to the holdout wholesale before the per-class draw.
  std::vector<std::string> reserved_sites;
  std::vector<std::string> axes;
  double fraction = 0.3;
  std::uint64_t seed = 0;
};

// Number of combinations held out for a class with `observed` combinations:
// floor(fraction * observed), raised to 1 when observed >= 2.
std::size_t holdout_count(std::size_t observed, double fraction);

// For every class independently, draws the holdout count of its observed
// axis combinations uniformly at random and moves all matching records to
// the holdout partition. Records at `reserved_sites` go to the holdout
// unconditionally and do not take part in the draw.
HoldoutSplit holdout_split(const registry::DatasetManifest& manifest, double fraction,
                           const std::vector<std::string>& axes, std::uint64_t seed,
                           const std::vector<std::string>& reserved_sites = {});

// Writes train.tsv, holdout.tsv and split.json (seed, fraction, axes,
// excluded combinations) into `dir`.
void write_holdout_split(const HoldoutSplit& split, const std::filesystem::path& dir);

struct TaskSpec {
  std::string name;
  std::vector<std::string> classes;
  // Optional fixed class -> site assignment.
  std::map<std::string, std::string> assignment;
  // A site is a candidate for a class only with at least this many records.
  std::size_t min_patches = 1;
};

struct CorrelatedTaskSplit {
  std::string task;
  std::size_t run_id = 0;
  std::vector<std::string> classes;
  std::map<std::string, std::string> assignment;  // class -> its only training site
  registry::DatasetManifest train;
  registry::DatasetManifest test;
  // Records per class in the training pool before the site restriction.
  std::map<std::string, std::size_t> class_pool_sizes;
  std::vector<std::string> test_sites;

  std::string label() const;
};

// Training records: for each class only its assigned site, sites distinct
// across classes. Test records: task classes from `test_pool` at sites that
// never occur in `train_pool`.
CorrelatedTaskSplit correlated_task_split(const registry::DatasetManifest& train_pool,
                                          const registry::DatasetManifest& test_pool, const TaskSpec& task,
                                          std::uint64_t seed);

// Candidate sites per class (in site vocabulary order).
std::map<std::string, std::vector<std::string>> candidate_sites(const registry::DatasetManifest& train_pool,
                                                                const TaskSpec& task);

// Number of injective class -> candidate-site maps, capped at `cap + 1`.
std::size_t count_assignments(const registry::DatasetManifest& train_pool, const TaskSpec& task,
                              std::size_t cap);

// One split per injective assignment, lexicographic in (class order, site
// id). Refuses when there are more than `max_runs` assignments.
std::vector<CorrelatedTaskSplit> enumerate_runs(const registry::DatasetManifest& train_pool,
                                                const registry::DatasetManifest& test_pool, const TaskSpec& task,
                                                std::size_t max_runs = 1000);

}  // namespace medi::split
