#pragma once

#include "medi/diffusion/checkpoint.hpp"
#include "medi/diffusion/ddim.hpp"
#include "medi/diffusion/trainer.hpp"
#include "medi/pipeline/toygen.hpp"
#include "medi/split.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace medi::pipeline {

struct DatasetSpec {
  std::filesystem::path manifest;  // used when no toy spec is given
  std::optional<ToySpec> toy;
};

struct SplitSpec {
  double fraction = 0.3;
  std::vector<std::string> axes{"site", "race"};
  std::uint64_t seed = 0;
  // Sites kept out of every training set and used only for testing.
  std::vector<std::string> reserved_sites;
};

// Widths of the metadata-conditioned model; the class-only arm uses
// d_class = d_t with the same UNet and schedule.
struct ModelSpec {
  int d_t = 128;
  int d_class = 64;
  int d_e = 64;
  std::vector<std::string> meta_attributes{"site"};
  diffusion::UNetConfig unet;
  diffusion::ScheduleConfig schedule;
};

struct SamplingSpec {
  std::string plan = "frequency";
  long total = 0;  // 0: one synthetic image per real training image
  int steps = 100;
  std::uint64_t seed = 0;
  int batch_size = 64;
};

struct EvaluationSpec {
  std::string extractor = "random-conv";
  std::uint64_t extractor_seed = 0;
  int n_per_class = 20;
  std::size_t min_samples = 2;
  std::vector<split::TaskSpec> tasks;
  std::size_t max_runs = 1000;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<std::uint64_t> seeds{0};
  DatasetSpec dataset;
  SplitSpec split;
  ModelSpec model;
  diffusion::TrainingSpec training;
  SamplingSpec sampling;
  EvaluationSpec evaluation;

  void validate() const;
};

nlohmann::json to_json(const ToySpec& s);
ToySpec toy_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
// Missing keys keep their defaults; unknown top-level keys are an error.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Conditioning spec for one arm, with vocabulary sizes taken from `schema`.
diffusion::ConditioningSpec arm_spec(const ModelSpec& model, bool class_only, const registry::MetadataSchema& schema);

diffusion::DdimOptions ddim_options(const SamplingSpec& s);

// Run root from $MEDI_RUN_ROOT, else "runs".
std::filesystem::path run_root();

}  // namespace medi::pipeline
