#pragma once

#include "medi/diffusion/schedule.hpp"
#include "medi/diffusion/unet.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace medi::diffusion {

struct ScheduleConfig {
  int num_timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return NoiseSchedule::linear(num_timesteps, beta_start, beta_end); }
  bool operator==(const ScheduleConfig&) const = default;
};

// Everything needed to rebuild and safely use a trained model: widths,
// schedule, and the vocabularies its embedding ids refer to.
struct CheckpointMeta {
  UNetConfig unet;
  ConditioningSpec spec;
  ScheduleConfig schedule;
  std::vector<std::string> class_vocab;
  std::vector<std::vector<std::string>> meta_vocabs;  // one per spec.meta_attributes
  std::string schema_fingerprint;
  nlohmann::json training;  // free-form record of the training run

  // Maps names to a conditioning tuple; throws on unknown values.
  Condition condition_for(const std::string& class_label, const std::vector<std::string>& meta_values) const;
};

struct Checkpoint {
  CheckpointMeta meta;
  DenoiserModel model;
};

// Binary layout: "MEDICKPT" magic, u32 version, u64 header length, JSON
// header, then every parameter as little-endian float32 in params() order.
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const DenoiserModel& model);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const UNetConfig& c);
nlohmann::json to_json(const ConditioningSpec& s);
nlohmann::json to_json(const ScheduleConfig& s);
UNetConfig unet_config_from_json(const nlohmann::json& j);
ConditioningSpec conditioning_spec_from_json(const nlohmann::json& j);
ScheduleConfig schedule_config_from_json(const nlohmann::json& j);

}  // namespace medi::diffusion
