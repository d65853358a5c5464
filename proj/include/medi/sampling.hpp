#pragma once

#include "medi/diffusion/checkpoint.hpp"
#include "medi/diffusion/ddim.hpp"
#include "medi/registry.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace medi::sampling {

enum class Provenance { frequency_matched, uniform_class, cartesian_fill };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct PlanEntry {
  std::vector<std::string> values;  // one per plan attribute, class first
  long count = 0;

  bool operator==(const PlanEntry&) const = default;
};

struct SamplingPlan {
  std::vector<std::string> attributes;  // "class" followed by metadata attributes
  std::vector<PlanEntry> entries;       // sorted by values
  long total = 0;
  Provenance provenance = Provenance::frequency_matched;
  std::uint64_t seed = 0;

  // Counts non-negative and summing to total.
  void validate() const;
  long count_of(const std::vector<std::string>& values) const;

  bool operator==(const SamplingPlan&) const = default;
};

nlohmann::json to_json(const SamplingPlan& plan);
SamplingPlan plan_from_json(const nlohmann::json& j);

// One entry per observed (class, meta...) tuple with its empirical count.
// `meta_attributes` empty gives the class-only plan.
SamplingPlan frequency_matched_plan(const registry::DatasetManifest& train,
                                    const std::vector<std::string>& meta_attributes, std::uint64_t seed = 0);

// Counts differ by at most one; the remainder goes to the lexicographically
// first classes.
SamplingPlan uniform_class_plan(std::vector<std::string> classes, long total, std::uint64_t seed = 0);

// One entry per (class, site) of the full product, including pairs never
// observed together.
SamplingPlan cartesian_fill_plan(std::vector<std::string> classes, std::vector<std::string> sites, long total,
                                 std::uint64_t seed = 0, std::size_t max_entries = 10000);

// Seed of the index-th image of a tuple.
std::uint64_t image_seed(std::uint64_t plan_seed, const std::vector<std::string>& values, long index);

struct ExecuteOptions {
  diffusion::DdimOptions ddim;
  int batch_size = 64;
  // Called after each batch with (images done, total).
  std::function<void(long, long)> on_progress;
};

// Samples every image of the plan into output_dir/images/<sha256>.ppm and
// returns the synthetic manifest (rows in plan order). Completed images are
// recorded in output_dir/progress.jsonl; a rerun skips them. The plan is
// written to output_dir/plan.json and the manifest to
// output_dir/manifest.tsv.
registry::DatasetManifest execute_plan(const SamplingPlan& plan, const diffusion::CheckpointMeta& meta,
                                       const diffusion::Denoiser& model, const std::filesystem::path& output_dir,
                                       const ExecuteOptions& options = {});

}  // namespace medi::sampling
