#pragma once

#include "medi/diffusion/checkpoint.hpp"
#include "medi/eval/extractor.hpp"
#include "medi/eval/fid.hpp"
#include "medi/eval/metrics.hpp"
#include "medi/pipeline/config.hpp"
#include "medi/pipeline/ledger.hpp"
#include "medi/registry.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace medi::pipeline {

using Logger = std::function<void(const std::string&)>;

// Generates the toy dataset into run_dir/data (or loads the configured
// manifest).
registry::DatasetManifest load_dataset(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                                       RunLedger* ledger = nullptr);

// Concatenation with image refs made absolute so the result does not
// depend on either base directory.
registry::DatasetManifest concat_manifests(const registry::DatasetManifest& a, const registry::DatasetManifest& b);

diffusion::CheckpointMeta make_checkpoint_meta(const ModelSpec& model, bool class_only,
                                               const registry::DatasetManifest& train);

std::vector<diffusion::TrainingExample> training_examples(const registry::DatasetManifest& manifest,
                                                          const diffusion::CheckpointMeta& meta);

// Trains one arm on `train` and writes the checkpoint. An existing
// checkpoint at `path` that the ledger vouches for is loaded instead.
diffusion::Checkpoint train_arm(const registry::DatasetManifest& train, const ModelSpec& model, bool class_only,
                                diffusion::TrainingSpec training, const std::filesystem::path& path,
                                RunLedger* ledger, const Logger& log);

struct FidArmResult {
  std::string arm;  // "cls" or "medi"
  long images = 0;
  eval::FIDResult fid;
};

struct FidSeedResult {
  std::uint64_t seed = 0;
  FidArmResult cls, medi;
  bool medi_wins() const { return medi.fid.macro_average < cls.fid.macro_average; }
};

struct FidStudyReport {
  std::string name;
  std::string extractor;
  long training_steps = 0;
  std::vector<FidSeedResult> seeds;
  int medi_wins() const;
};

FidStudyReport run_fid_study(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                             const Logger& log = {});

inline const std::vector<std::string>& shift_arms() {
  static const std::vector<std::string> arms{"no_syn", "cls", "medi"};
  return arms;
}
std::string arm_label(const std::string& arm);

struct ShiftRunResult {
  std::string task;
  std::string run;  // split label, e.g. "c0@s0,c1@s1"
  std::uint64_t seed = 0;
  long train_size = 0;
  long test_size = 0;
  std::map<std::string, eval::ProbeResult> arms;
};

struct ShiftExclusion {
  std::string task, run;
  std::uint64_t seed = 0;
  std::string reason;
};

struct ShiftStudyReport {
  std::string name;
  std::string extractor;
  int n_per_class = 0;
  std::vector<ShiftRunResult> runs;
  std::vector<ShiftExclusion> excluded;
  // task -> arm -> aggregate over runs x seeds
  std::map<std::string, std::map<std::string, eval::RunAggregate>> aggregates;
};

ShiftStudyReport run_shift_study(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                                 const Logger& log = {});

}  // namespace medi::pipeline
