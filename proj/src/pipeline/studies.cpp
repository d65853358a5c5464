#include "medi/pipeline/studies.hpp"

#include "medi/error.hpp"
#include "medi/eval/probe.hpp"
#include "medi/image_io.hpp"
#include "medi/pipeline/report.hpp"
#include "medi/random.hpp"
#include "medi/sampling.hpp"
#include "medi/split.hpp"

#include <fstream>
#include <set>

namespace medi::pipeline {

namespace fs = std::filesystem;

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string seed_dir(std::uint64_t seed) { return "seed" + std::to_string(seed); }

void snapshot_config(const ExperimentConfig& config, RunLedger& ledger) {
  const fs::path path = ledger.run_dir() / "config.json";
  const std::string text = to_json(config).dump(2) + "\n";
  if (fs::exists(path)) {
    std::ifstream in(path);
    const std::string old((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (old != text) throw ConfigError(ledger.run_dir().string() + " was created by a different config");
    return;
  }
  std::ofstream(path) << text;
  ledger.record("config", path);
}

registry::DatasetManifest sample_arm(const sampling::SamplingPlan& plan, const diffusion::Checkpoint& ckpt,
                                     const SamplingSpec& spec, const fs::path& dir, RunLedger& ledger,
                                     const Logger& log) {
  sampling::ExecuteOptions opts;
  opts.ddim = ddim_options(spec);
  opts.batch_size = spec.batch_size;
  say(log, "sampling " + std::to_string(plan.total) + " images (" + sampling::to_string(plan.provenance) + ") into " +
               dir.string());
  auto syn = sampling::execute_plan(plan, ckpt.meta, ckpt.model, dir, opts);
  ledger.record("plan", dir / "plan.json");
  ledger.record("manifest", dir / "manifest.tsv", {{"images", syn.size()}});
  return syn;
}

std::vector<std::string> attribute_column(const registry::DatasetManifest& m, const std::string& attribute) {
  std::vector<std::string> out;
  out.reserve(m.size());
  for (const auto& r : m.records) out.push_back(r.attribute(attribute));
  return out;
}

}  // namespace

registry::DatasetManifest load_dataset(const ExperimentConfig& config, const fs::path& run_dir, RunLedger* ledger) {
  if (!config.dataset.toy) return registry::load_manifest(config.dataset.manifest);
  const fs::path dir = run_dir / "data";
  const fs::path manifest_path = dir / "manifest.tsv";
  if (ledger && ledger->find(manifest_path) && fs::exists(manifest_path)) return registry::load_manifest(manifest_path);
  auto m = generate_toy_dataset(*config.dataset.toy, dir);
  if (ledger) ledger->record("manifest", manifest_path, {{"toy", to_json(*config.dataset.toy)}});
  return m;
}

registry::DatasetManifest concat_manifests(const registry::DatasetManifest& a, const registry::DatasetManifest& b) {
  std::vector<registry::PatchRecord> records;
  records.reserve(a.size() + b.size());
  for (const auto* m : {&a, &b})
    for (auto r : m->records) {
      r.image_ref = fs::absolute(m->image_path(r)).string();
      records.push_back(std::move(r));
    }
  return registry::make_manifest(std::move(records));
}

diffusion::CheckpointMeta make_checkpoint_meta(const ModelSpec& model, bool class_only,
                                               const registry::DatasetManifest& train) {
  diffusion::CheckpointMeta meta;
  meta.unet = model.unet;
  meta.schedule = model.schedule;
  meta.spec = arm_spec(model, class_only, train.schema);
  meta.class_vocab = train.schema.vocabulary("class").values();
  std::vector<std::string> attrs{"class"};
  for (const auto& a : meta.spec.meta_attributes) {
    meta.meta_vocabs.push_back(train.schema.vocabulary(a).values());
    attrs.push_back(a);
  }
  meta.schema_fingerprint = registry::schema_fingerprint(train.schema, attrs);
  return meta;
}

std::vector<diffusion::TrainingExample> training_examples(const registry::DatasetManifest& manifest,
                                                          const diffusion::CheckpointMeta& meta) {
  std::vector<diffusion::TrainingExample> out;
  out.reserve(manifest.size());
  for (const auto& r : manifest.records) {
    const auto img = image::read_ppm(manifest.image_path(r));
    if (img.width != meta.unet.image_size || img.height != meta.unet.image_size)
      throw ConfigError("image " + r.patch_id + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                        " but the model expects " + std::to_string(meta.unet.image_size) + "x" +
                        std::to_string(meta.unet.image_size));
    std::vector<std::string> meta_values;
    for (const auto& a : meta.spec.meta_attributes) meta_values.push_back(r.attribute(a));
    out.push_back({r.patch_id, image::to_chw(img), meta.condition_for(r.class_label, meta_values)});
  }
  return out;
}

diffusion::Checkpoint train_arm(const registry::DatasetManifest& train, const ModelSpec& model, bool class_only,
                                diffusion::TrainingSpec training, const fs::path& path, RunLedger* ledger,
                                const Logger& log) {
  if (ledger && fs::exists(path) && ledger->find(path)) {
    say(log, "reusing checkpoint " + path.string());
    return diffusion::load_checkpoint(path);
  }
  auto meta = make_checkpoint_meta(model, class_only, train);
  const auto data = training_examples(train, meta);
  diffusion::DenoiserModel net(meta.unet, meta.spec, derive_seed(training.seed, "init"));
  const auto schedule = meta.schedule.build();
  say(log, std::string("training ") + (class_only ? "class-only" : "metadata-conditioned") + " model: " +
               std::to_string(training.steps) + " steps on " + std::to_string(data.size()) + " images");
  const long report_every = std::max<long>(1, training.steps / 10);
  double window = 0.0;
  const auto history = diffusion::train(net, data, schedule, training, meta.unet.in_channels, meta.unet.image_size,
                                        [&](long step, double loss) {
                                          window += loss;
                                          if (step % report_every == 0) {
                                            say(log, "  step " + std::to_string(step) + " loss " +
                                                         std::to_string(window / report_every));
                                            window = 0.0;
                                          }
                                        });
  double tail = 0.0;
  const std::size_t k = std::min<std::size_t>(history.size(), 100);
  for (std::size_t i = history.size() - k; i < history.size(); ++i) tail += history[i];
  meta.training = {{"steps", training.steps},
                   {"lr", training.lr},
                   {"batch_size", training.batch_size},
                   {"seed", training.seed},
                   {"grad_clip", training.grad_clip},
                   {"examples", data.size()},
                   {"final_loss_mean100", k ? tail / static_cast<double>(k) : 0.0}};
  diffusion::save_checkpoint(path, meta, net);
  if (ledger) ledger->record("checkpoint", path, {{"class_only", class_only}});
  return {std::move(meta), std::move(net)};
}

int FidStudyReport::medi_wins() const {
  int n = 0;
  for (const auto& s : seeds) n += s.medi_wins() ? 1 : 0;
  return n;
}

FidStudyReport run_fid_study(const ExperimentConfig& config, const fs::path& run_dir_arg, const Logger& log) {
  config.validate();
  const fs::path run_dir = fs::absolute(run_dir_arg);
  RunLedger ledger(run_dir);
  snapshot_config(config, ledger);
  ledger.status("started", {{"study", "fid"}});
  const auto data = load_dataset(config, run_dir, &ledger);
  const auto split = split::holdout_split(data, config.split.fraction, config.split.axes, config.split.seed,
                                          config.split.reserved_sites);
  split::write_holdout_split(split, run_dir / "split");
  ledger.record("manifest", run_dir / "split" / "train.tsv");
  ledger.record("manifest", run_dir / "split" / "holdout.tsv");
  // Fresh schema: the models only know the vocabulary they were trained on.
  const auto train = registry::make_manifest(split.train.records, split.train.base_dir);
  say(log, "diffusion training set: " + std::to_string(train.size()) + " of " + std::to_string(data.size()) +
               " patches");

  const auto extractor = eval::make_extractor(config.evaluation.extractor, config.evaluation.extractor_seed);
  const Eigen::MatrixXd real_features = eval::extract_manifest(train, *extractor);
  const auto real_labels = eval::class_labels(train);

  FidStudyReport report;
  report.name = config.name;
  report.extractor = extractor->name();
  report.training_steps = config.training.steps;
  for (const auto seed : config.seeds) {
    FidSeedResult result;
    result.seed = seed;
    for (const bool class_only : {true, false}) {
      const std::string arm = class_only ? "cls" : "medi";
      const fs::path dir = run_dir / seed_dir(seed) / arm;
      auto training = config.training;
      training.seed = derive_seed(config.training.seed, seed);  // same init and batches for both arms
      const auto ckpt = train_arm(train, config.model, class_only, training, dir / "model.ckpt", &ledger, log);
      const auto plan = sampling::frequency_matched_plan(train, ckpt.meta.spec.meta_attributes,
                                                         derive_seed(config.sampling.seed, seed));
      const auto syn = sample_arm(plan, ckpt, config.sampling, dir / "synthetic", ledger, log);
      FidArmResult& out = class_only ? result.cls : result.medi;
      out.arm = arm;
      out.images = static_cast<long>(syn.size());
      out.fid = eval::per_class_fid(real_features, real_labels, eval::extract_manifest(syn, *extractor),
                                    eval::class_labels(syn), config.evaluation.min_samples);
      say(log, "seed " + std::to_string(seed) + " " + arm + ": macro FID " + std::to_string(out.fid.macro_average));
    }
    report.seeds.push_back(std::move(result));
  }
  for (const auto& p : write_fid_report(report, run_dir / "reports")) ledger.record("report", p);
  ledger.status("finished", {{"study", "fid"}, {"medi_wins", report.medi_wins()}});
  return report;
}

std::string arm_label(const std::string& arm) {
  if (arm == "no_syn") return "No syn. data";
  if (arm == "cls") return "CLS only";
  if (arm == "medi") return "MeDi";
  return arm;
}

ShiftStudyReport run_shift_study(const ExperimentConfig& config, const fs::path& run_dir_arg, const Logger& log) {
  config.validate();
  const fs::path run_dir = fs::absolute(run_dir_arg);
  if (config.split.reserved_sites.empty())
    throw ConfigError("the shift study needs split.reserved_sites: sites kept for testing only");
  if (config.evaluation.tasks.empty()) throw ConfigError("the shift study needs at least one evaluation task");
  RunLedger ledger(run_dir);
  snapshot_config(config, ledger);
  ledger.status("started", {{"study", "shift"}});
  const auto data = load_dataset(config, run_dir, &ledger);

  const std::set<std::string> reserved(config.split.reserved_sites.begin(), config.split.reserved_sites.end());
  std::vector<registry::PatchRecord> pool_records, test_records;
  for (const auto& r : data.records) (reserved.contains(r.site) ? test_records : pool_records).push_back(r);
  if (test_records.empty()) throw ConfigError("no records at the reserved sites");
  const auto train_pool = registry::make_manifest(std::move(pool_records), data.base_dir);
  const auto test_pool = registry::subset_manifest(data, std::move(test_records));
  say(log, "training pool " + std::to_string(train_pool.size()) + " patches, reserved test pool " +
               std::to_string(test_pool.size()));

  const auto extractor = eval::make_extractor(config.evaluation.extractor, config.evaluation.extractor_seed);
  const auto n_per_class = static_cast<std::size_t>(config.evaluation.n_per_class);

  ShiftStudyReport report;
  report.name = config.name;
  report.extractor = extractor->name();
  report.n_per_class = config.evaluation.n_per_class;

  std::map<std::string, std::vector<split::CorrelatedTaskSplit>> runs_by_task;
  for (const auto& task : config.evaluation.tasks) {
    runs_by_task[task.name] = split::enumerate_runs(train_pool, test_pool, task, config.evaluation.max_runs);
    say(log, "task " + task.name + ": " + std::to_string(runs_by_task[task.name].size()) + " site assignments");
  }

  for (const auto seed : config.seeds) {
    auto training = config.training;
    training.seed = derive_seed(config.training.seed, seed);
    const fs::path sdir = run_dir / seed_dir(seed);
    const auto cls = train_arm(train_pool, config.model, true, training, sdir / "cls" / "model.ckpt", &ledger, log);
    const auto medi = train_arm(train_pool, config.model, false, training, sdir / "medi" / "model.ckpt", &ledger, log);

    for (const auto& task : config.evaluation.tasks) {
      for (const auto& run : runs_by_task[task.name]) {
        const std::string label = run.label();
        const fs::path rdir = sdir / task.name / ("run" + std::to_string(run.run_id));
        try {
          ShiftRunResult result;
          result.task = task.name;
          result.run = label;
          result.seed = seed;
          result.train_size = static_cast<long>(run.train.size());
          result.test_size = static_cast<long>(run.test.size());
          const long total = config.sampling.total > 0 ? config.sampling.total : result.train_size;
          const std::uint64_t probe_seed = derive_seed(derive_seed(seed, task.name), label);
          const std::uint64_t plan_seed = derive_seed(derive_seed(config.sampling.seed, seed), task.name + "/" + label);

          const Eigen::MatrixXd test_features = eval::extract_manifest(run.test, *extractor);
          const auto test_labels = eval::class_labels(run.test);
          const auto test_sites = attribute_column(run.test, "site");

          for (const auto& arm : shift_arms()) {
            registry::DatasetManifest pool = run.train;
            if (arm == "cls") {
              const auto plan = sampling::uniform_class_plan(run.classes, total, plan_seed);
              pool = concat_manifests(run.train, sample_arm(plan, cls, config.sampling, rdir / "cls", ledger, log));
            } else if (arm == "medi") {
              std::vector<std::string> sites;
              for (const auto& [c, s] : run.assignment) sites.push_back(s);
              const auto plan = sampling::cartesian_fill_plan(run.classes, sites, total, plan_seed);
              pool = concat_manifests(run.train, sample_arm(plan, medi, config.sampling, rdir / "medi", ledger, log));
            }
            const auto probe = eval::train_linear_probe(eval::extract_manifest(pool, *extractor),
                                                        eval::class_labels(pool), n_per_class, probe_seed);
            result.arms[arm] = eval::score_predictions(label, probe.predict(test_features), test_labels, test_sites);
          }
          say(log, "seed " + std::to_string(seed) + " " + task.name + " " + label + ": TSS AVG no-syn " +
                       std::to_string(result.arms["no_syn"].tss_avg) + ", CLS " +
                       std::to_string(result.arms["cls"].tss_avg) + ", MeDi " +
                       std::to_string(result.arms["medi"].tss_avg));
          report.runs.push_back(std::move(result));
        } catch (const Error& e) {
          say(log, "run " + label + " (seed " + std::to_string(seed) + ") failed: " + e.what());
          report.excluded.push_back({task.name, label, seed, e.what()});
          ledger.status("run-excluded", {{"task", task.name}, {"run", label}, {"seed", seed}, {"reason", e.what()}});
        }
      }
    }
  }

  for (const auto& task : config.evaluation.tasks) {
    for (const auto& arm : shift_arms()) {
      std::vector<eval::ProbeResult> results;
      for (const auto& r : report.runs)
        if (r.task == task.name) results.push_back(r.arms.at(arm));
      if (!results.empty()) report.aggregates[task.name][arm] = eval::aggregate_runs(results);
    }
  }
  for (const auto& p : write_shift_report(report, run_dir / "reports")) ledger.record("report", p);
  ledger.status("finished", {{"study", "shift"}, {"runs", report.runs.size()}, {"excluded", report.excluded.size()}});
  return report;
}

}  // namespace medi::pipeline
