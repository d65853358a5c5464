#include "medi/pipeline/config.hpp"

#include "medi/error.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

namespace medi::pipeline {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("config: at least one seed is required");
  if (!dataset.toy && dataset.manifest.empty()) throw ConfigError("config: dataset needs a manifest path or a toy spec");
  if (dataset.toy) dataset.toy->validate();
  if (!(split.fraction > 0.0 && split.fraction < 1.0)) throw ConfigError("config: split.fraction must lie in (0, 1)");
  arm_spec(model, false, registry::MetadataSchema{});  // width check only
  if (training.steps < 0 || training.batch_size <= 0 || training.lr <= 0.0)
    throw ConfigError("config: training needs steps >= 0, batch_size > 0 and lr > 0");
  if (sampling.steps <= 0 || sampling.batch_size <= 0) throw ConfigError("config: sampling steps and batch_size must be positive");
  if (sampling.total < 0) throw ConfigError("config: sampling.total must be >= 0");
  if (evaluation.n_per_class <= 0) throw ConfigError("config: evaluation.n_per_class must be positive");
}

json to_json(const ToySpec& s) {
  return {{"classes", s.classes},         {"sites", s.sites},
          {"patches_per_class", s.patches_per_class}, {"correlation", s.correlation},
          {"patches_per_patient", s.patches_per_patient}, {"image_size", s.image_size},
          {"tint_strength", s.tint_strength}, {"noise", s.noise},
          {"min_tint_gap", s.min_tint_gap}, {"races", s.races},
          {"genders", s.genders},           {"seed", s.seed}};
}

ToySpec toy_spec_from_json(const json& j) {
  reject_unknown(j, {"classes", "sites", "patches_per_class", "correlation", "patches_per_patient", "image_size",
                     "tint_strength", "noise", "min_tint_gap", "races", "genders", "seed"},
                 "toy");
  ToySpec s;
  s.classes = j.value("classes", s.classes);
  s.sites = j.value("sites", s.sites);
  s.patches_per_class = j.value("patches_per_class", s.patches_per_class);
  s.correlation = j.value("correlation", s.correlation);
  s.patches_per_patient = j.value("patches_per_patient", s.patches_per_patient);
  s.image_size = j.value("image_size", s.image_size);
  s.tint_strength = j.value("tint_strength", s.tint_strength);
  s.noise = j.value("noise", s.noise);
  s.min_tint_gap = j.value("min_tint_gap", s.min_tint_gap);
  s.races = j.value("races", s.races);
  s.genders = j.value("genders", s.genders);
  s.seed = j.value("seed", s.seed);
  return s;
}

json to_json(const ExperimentConfig& c) {
  json dataset = json::object();
  if (c.dataset.toy) dataset["toy"] = to_json(*c.dataset.toy);
  else dataset["manifest"] = c.dataset.manifest.string();
  json tasks = json::array();
  for (const auto& t : c.evaluation.tasks)
    tasks.push_back({{"name", t.name}, {"classes", t.classes}, {"assignment", t.assignment}, {"min_patches", t.min_patches}});
  return {
      {"name", c.name},
      {"seeds", c.seeds},
      {"dataset", dataset},
      {"split",
       {{"fraction", c.split.fraction}, {"axes", c.split.axes}, {"seed", c.split.seed},
        {"reserved_sites", c.split.reserved_sites}}},
      {"model",
       {{"d_t", c.model.d_t}, {"d_class", c.model.d_class}, {"d_e", c.model.d_e},
        {"meta_attributes", c.model.meta_attributes}, {"unet", diffusion::to_json(c.model.unet)},
        {"schedule", diffusion::to_json(c.model.schedule)}}},
      {"training",
       {{"steps", c.training.steps}, {"lr", c.training.lr}, {"batch_size", c.training.batch_size},
        {"seed", c.training.seed}, {"grad_clip", c.training.grad_clip}}},
      {"sampling",
       {{"plan", c.sampling.plan}, {"total", c.sampling.total}, {"steps", c.sampling.steps},
        {"seed", c.sampling.seed}, {"batch_size", c.sampling.batch_size}}},
      {"evaluation",
       {{"extractor", c.evaluation.extractor}, {"extractor_seed", c.evaluation.extractor_seed},
        {"n_per_class", c.evaluation.n_per_class}, {"min_samples", c.evaluation.min_samples},
        {"tasks", tasks}, {"max_runs", c.evaluation.max_runs}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j, {"name", "seeds", "dataset", "split", "model", "training", "sampling", "evaluation"}, "config");
  ExperimentConfig c;
  c.name = j.value("name", c.name);
  c.seeds = j.value("seeds", c.seeds);
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    reject_unknown(d, {"manifest", "toy"}, "dataset");
    if (d.contains("toy")) c.dataset.toy = toy_spec_from_json(d["toy"]);
    if (d.contains("manifest")) c.dataset.manifest = d["manifest"].get<std::string>();
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    reject_unknown(s, {"fraction", "axes", "seed", "reserved_sites"}, "split");
    c.split.fraction = s.value("fraction", c.split.fraction);
    c.split.axes = s.value("axes", c.split.axes);
    c.split.seed = s.value("seed", c.split.seed);
    c.split.reserved_sites = s.value("reserved_sites", c.split.reserved_sites);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, {"d_t", "d_class", "d_e", "meta_attributes", "unet", "schedule"}, "model");
    c.model.d_t = m.value("d_t", c.model.d_t);
    c.model.d_class = m.value("d_class", c.model.d_class);
    c.model.d_e = m.value("d_e", c.model.d_e);
    c.model.meta_attributes = m.value("meta_attributes", c.model.meta_attributes);
    if (m.contains("unet")) c.model.unet = diffusion::unet_config_from_json(m["unet"]);
    if (m.contains("schedule")) c.model.schedule = diffusion::schedule_config_from_json(m["schedule"]);
  }
  if (j.contains("training")) {
    const auto& t = j["training"];
    reject_unknown(t, {"steps", "lr", "batch_size", "seed", "grad_clip"}, "training");
    c.training.steps = t.value("steps", c.training.steps);
    c.training.lr = t.value("lr", c.training.lr);
    c.training.batch_size = t.value("batch_size", c.training.batch_size);
    c.training.seed = t.value("seed", c.training.seed);
    c.training.grad_clip = t.value("grad_clip", c.training.grad_clip);
  }
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    reject_unknown(s, {"plan", "total", "steps", "seed", "batch_size"}, "sampling");
    c.sampling.plan = s.value("plan", c.sampling.plan);
    c.sampling.total = s.value("total", c.sampling.total);
    c.sampling.steps = s.value("steps", c.sampling.steps);
    c.sampling.seed = s.value("seed", c.sampling.seed);
    c.sampling.batch_size = s.value("batch_size", c.sampling.batch_size);
  }
  if (j.contains("evaluation")) {
    const auto& e = j["evaluation"];
    reject_unknown(e, {"extractor", "extractor_seed", "n_per_class", "min_samples", "tasks", "max_runs"}, "evaluation");
    c.evaluation.extractor = e.value("extractor", c.evaluation.extractor);
    c.evaluation.extractor_seed = e.value("extractor_seed", c.evaluation.extractor_seed);
    c.evaluation.n_per_class = e.value("n_per_class", c.evaluation.n_per_class);
    c.evaluation.min_samples = e.value("min_samples", c.evaluation.min_samples);
    c.evaluation.max_runs = e.value("max_runs", c.evaluation.max_runs);
    for (const auto& t : e.value("tasks", json::array())) {
      reject_unknown(t, {"name", "classes", "assignment", "min_patches"}, "task");
      split::TaskSpec task;
      task.name = t.at("name").get<std::string>();
      task.classes = t.at("classes").get<std::vector<std::string>>();
      task.assignment = t.value("assignment", task.assignment);
      task.min_patches = t.value("min_patches", task.min_patches);
      c.evaluation.tasks.push_back(std::move(task));
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto c = config_from_json(j);
  // Relative manifest paths resolve against the config file.
  if (!c.dataset.manifest.empty() && c.dataset.manifest.is_relative())
    c.dataset.manifest = path.parent_path() / c.dataset.manifest;
  return c;
}

diffusion::ConditioningSpec arm_spec(const ModelSpec& model, bool class_only, const registry::MetadataSchema& schema) {
  const bool have_schema = schema.has_attribute("class");
  diffusion::ConditioningSpec s;
  s.d_t = model.d_t;
  s.class_cardinality = have_schema ? schema.cardinality("class") : 1;
  if (class_only) {
    s.d_class = model.d_t;
  } else {
    s.d_class = model.d_class;
    s.d_e = model.d_e;
    s.meta_attributes = model.meta_attributes;
    for (const auto& a : model.meta_attributes) s.meta_cardinalities.push_back(have_schema ? schema.cardinality(a) : 1);
  }
  s.validate();
  return s;
}

diffusion::DdimOptions ddim_options(const SamplingSpec& s) {
  diffusion::DdimOptions o;
  o.num_inference_steps = s.steps;
  return o;
}

std::filesystem::path run_root() {
  if (const char* env = std::getenv("MEDI_RUN_ROOT"); env && *env) return env;
  return "runs";
}

}  // namespace medi::pipeline
