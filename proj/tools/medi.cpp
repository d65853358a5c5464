// medi: command-line entry point for the metadata-conditioned diffusion
// toolkit. Every subcommand is a thin wrapper over the library.

#include "medi/diffusion/checkpoint.hpp"
#include "medi/eval/extractor.hpp"
#include "medi/eval/metrics.hpp"
#include "medi/eval/probe.hpp"
#include "medi/pipeline/config.hpp"
#include "medi/pipeline/report.hpp"
#include "medi/pipeline/studies.hpp"
#include "medi/pipeline/toygen.hpp"
#include "medi/registry.hpp"
#include "medi/sampling.hpp"
#include "medi/split.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace medi;

namespace {

void log_line(const std::string& s) { std::cerr << s << std::endl; }

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

fs::path study_dir(const pipeline::ExperimentConfig& c, const std::string& override_dir) {
  return override_dir.empty() ? pipeline::run_root() / c.name : fs::path(override_dir);
}

nlohmann::json fid_json(const eval::FIDResult& f) {
  return {{"overall", f.overall}, {"macro_average", f.macro_average}, {"per_class", f.per_class}, {"skipped", f.skipped}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medi: metadata-guided conditional diffusion toolkit"};
  app.require_subcommand(1);

  // audit
  std::string audit_manifest, audit_out;
  std::vector<std::string> audit_attrs{"site", "race"};
  auto* audit = app.add_subcommand("audit", "Validate a manifest and print coverage statistics");
  audit->add_option("manifest", audit_manifest, "Manifest TSV")->required();
  audit->add_option("--attribute", audit_attrs, "Attributes to cross with class");
  audit->add_option("--out", audit_out, "Directory for coverage tables");

  // split
  std::string split_manifest, split_out;
  double split_fraction = 0.3;
  std::vector<std::string> split_axes{"site", "race"}, split_reserved;
  std::uint64_t split_seed = 0;
  auto* split_cmd = app.add_subcommand("split", "Holdout split over metadata combinations");
  split_cmd->add_option("manifest", split_manifest)->required();
  split_cmd->add_option("--fraction", split_fraction);
  split_cmd->add_option("--axes", split_axes)->delimiter(',');
  split_cmd->add_option("--reserved-sites", split_reserved)->delimiter(',');
  split_cmd->add_option("--seed", split_seed);
  split_cmd->add_option("--out", split_out)->required();

  // toygen
  std::string toy_config, toy_out;
  pipeline::ToySpec toy;
  int toy_classes = 0, toy_sites = 0;
  auto* toygen = app.add_subcommand("toygen", "Generate the toy class x site dataset");
  toygen->add_option("--config", toy_config, "JSON toy spec (flags override)");
  toygen->add_option("--classes", toy_classes, "Number of classes c0..");
  toygen->add_option("--sites", toy_sites, "Number of sites s0..");
  toygen->add_option("--per-class", toy.patches_per_class);
  toygen->add_option("--correlation", toy.correlation);
  toygen->add_option("--size", toy.image_size);
  toygen->add_option("--tint", toy.tint_strength);
  toygen->add_option("--seed", toy.seed);
  toygen->add_option("--out", toy_out)->required();

  // train
  std::string train_manifest, train_config, train_arm = "medi", train_out;
  long train_steps = -1;
  auto* train = app.add_subcommand("train", "Train one diffusion model");
  train->add_option("manifest", train_manifest)->required();
  train->add_option("--config", train_config, "Experiment config (model and training sections)")->required();
  train->add_option("--arm", train_arm, "cls or medi")->check(CLI::IsMember({"cls", "medi"}));
  train->add_option("--steps", train_steps, "Override training.steps");
  train->add_option("--out", train_out, "Checkpoint path")->required();

  // sample
  std::string sample_ckpt, sample_plan = "frequency", sample_manifest, sample_out;
  std::vector<std::string> sample_classes, sample_sites;
  long sample_total = 0;
  std::uint64_t sample_seed = 0;
  int sample_steps = 100, sample_batch = 64;
  auto* sample = app.add_subcommand("sample", "Build a sampling plan and execute it");
  sample->add_option("--checkpoint", sample_ckpt)->required();
  sample->add_option("--plan", sample_plan)->check(CLI::IsMember({"frequency", "uniform", "cartesian"}));
  sample->add_option("--manifest", sample_manifest, "Training manifest (frequency plan)");
  sample->add_option("--classes", sample_classes)->delimiter(',');
  sample->add_option("--sites", sample_sites)->delimiter(',');
  sample->add_option("--total", sample_total);
  sample->add_option("--seed", sample_seed);
  sample->add_option("--steps", sample_steps, "DDIM steps");
  sample->add_option("--batch", sample_batch);
  sample->add_option("--out", sample_out)->required();

  // fid
  std::string fid_real, fid_syn, fid_extractor = "random-conv", fid_out;
  std::uint64_t fid_extractor_seed = 0;
  std::size_t fid_min = 2;
  auto* fid = app.add_subcommand("fid", "Per-class FID between two manifests");
  fid->add_option("--real", fid_real)->required();
  fid->add_option("--syn", fid_syn)->required();
  fid->add_option("--extractor", fid_extractor);
  fid->add_option("--extractor-seed", fid_extractor_seed);
  fid->add_option("--min-samples", fid_min);
  fid->add_option("--out", fid_out, "Report JSON");

  // probe
  std::vector<std::string> probe_train;
  std::string probe_test, probe_extractor = "random-conv", probe_out;
  std::uint64_t probe_extractor_seed = 0, probe_seed = 0;
  std::size_t probe_n = 20;
  auto* probe = app.add_subcommand("probe", "Few-shot linear probe on frozen features");
  probe->add_option("--train", probe_train, "One or more manifests pooled for fitting")->required();
  probe->add_option("--test", probe_test)->required();
  probe->add_option("--n-per-class", probe_n);
  probe->add_option("--seed", probe_seed);
  probe->add_option("--extractor", probe_extractor);
  probe->add_option("--extractor-seed", probe_extractor_seed);
  probe->add_option("--out", probe_out, "Report JSON");

  // studies
  std::string study_config, study_run_dir;
  auto* study_fid = app.add_subcommand("study-fid", "CLS vs MeDi per-class FID study");
  study_fid->add_option("config", study_config)->required();
  study_fid->add_option("--run-dir", study_run_dir, "Defaults to $MEDI_RUN_ROOT/<name>");
  auto* study_shift = app.add_subcommand("study-shift", "Subpopulation-shift linear-probe study");
  study_shift->add_option("config", study_config)->required();
  study_shift->add_option("--run-dir", study_run_dir, "Defaults to $MEDI_RUN_ROOT/<name>");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-render reports and verify the run ledger");
  report->add_option("run_dir", report_dir)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*audit) {
      const auto m = registry::load_manifest(audit_manifest);
      std::cout << registry::format_stats(registry::summarize(m));
      for (const auto& a : audit_attrs) {
        const auto cov = registry::coverage_matrix(m, a);
        std::cout << "class x " << a << ": " << cov.nonzero_cells() << " of " << cov.cells() << " cells populated\n";
        if (!audit_out.empty()) {
          fs::create_directories(audit_out);
          registry::write_coverage_table(cov, fs::path(audit_out) / ("coverage_" + a + ".tsv"));
        }
      }
    } else if (*split_cmd) {
      const auto m = registry::load_manifest(split_manifest);
      const auto s = split::holdout_split(m, split_fraction, split_axes, split_seed, split_reserved);
      split::write_holdout_split(s, split_out);
      std::cout << "train " << s.train.size() << ", holdout " << s.holdout.size() << '\n';
    } else if (*toygen) {
      if (!toy_config.empty()) {
        std::ifstream in(toy_config);
        if (!in) throw ConfigError("cannot open " + toy_config);
        const auto flags = toy;
        toy = pipeline::toy_spec_from_json(nlohmann::json::parse(in));
        if (toygen->count("--per-class")) toy.patches_per_class = flags.patches_per_class;
        if (toygen->count("--correlation")) toy.correlation = flags.correlation;
        if (toygen->count("--size")) toy.image_size = flags.image_size;
        if (toygen->count("--tint")) toy.tint_strength = flags.tint_strength;
        if (toygen->count("--seed")) toy.seed = flags.seed;
      }
      if (toy_classes > 0) {
        toy.classes.clear();
        for (int i = 0; i < toy_classes; ++i) toy.classes.push_back("c" + std::to_string(i));
      }
      if (toy_sites > 0) {
        toy.sites.clear();
        for (int i = 0; i < toy_sites; ++i) toy.sites.push_back("s" + std::to_string(i));
      }
      const auto m = pipeline::generate_toy_dataset(toy, toy_out);
      write_json(fs::path(toy_out) / "toy_spec.json", pipeline::to_json(toy));
      std::cout << "wrote " << m.size() << " patches to " << toy_out << '\n';
    } else if (*train) {
      auto config = pipeline::load_config(train_config);
      if (train_steps >= 0) config.training.steps = train_steps;
      const auto m = registry::load_manifest(train_manifest);
      const auto ckpt =
          pipeline::train_arm(m, config.model, train_arm == "cls", config.training, train_out, nullptr, log_line);
      std::cout << "checkpoint " << train_out << " (" << ckpt.model.net().parameter_count() << " parameters)\n";
    } else if (*sample) {
      const auto ckpt = diffusion::load_checkpoint(sample_ckpt);
      sampling::SamplingPlan plan;
      if (sample_plan == "frequency") {
        if (sample_manifest.empty()) throw ConfigError("--plan frequency needs --manifest");
        plan = sampling::frequency_matched_plan(registry::load_manifest(sample_manifest),
                                                ckpt.meta.spec.meta_attributes, sample_seed);
      } else {
        if (sample_classes.empty()) sample_classes = ckpt.meta.class_vocab;
        if (sample_plan == "uniform") {
          plan = sampling::uniform_class_plan(sample_classes, sample_total, sample_seed);
        } else {
          if (sample_sites.empty() && !ckpt.meta.meta_vocabs.empty()) sample_sites = ckpt.meta.meta_vocabs.front();
          plan = sampling::cartesian_fill_plan(sample_classes, sample_sites, sample_total, sample_seed);
        }
      }
      sampling::ExecuteOptions opts;
      opts.ddim.num_inference_steps = sample_steps;
      opts.batch_size = sample_batch;
      opts.on_progress = [](long done, long total) {
        std::cerr << "\r" << done << "/" << total << (done == total ? "\n" : "") << std::flush;
      };
      const auto syn = sampling::execute_plan(plan, ckpt.meta, ckpt.model, sample_out, opts);
      std::cerr << '\n';
      std::cout << "wrote " << syn.size() << " images to " << sample_out << '\n';
    } else if (*fid) {
      const auto extractor = eval::make_extractor(fid_extractor, fid_extractor_seed);
      const auto r = eval::per_class_fid(registry::load_manifest(fid_real), registry::load_manifest(fid_syn),
                                         *extractor, fid_min);
      for (const auto& [cls, v] : r.per_class) std::cout << cls << '\t' << v << '\n';
      for (const auto& [cls, why] : r.skipped) std::cerr << "warning: class " << cls << " skipped: " << why << '\n';
      std::cout << "overall\t" << r.overall << "\nmacro_average\t" << r.macro_average << '\n';
      if (!fid_out.empty()) {
        auto j = fid_json(r);
        j["extractor"] = extractor->name();
        write_json(fid_out, j);
      }
    } else if (*probe) {
      const auto extractor = eval::make_extractor(probe_extractor, probe_extractor_seed);
      auto pool = registry::load_manifest(probe_train.front());
      for (std::size_t i = 1; i < probe_train.size(); ++i)
        pool = pipeline::concat_manifests(pool, registry::load_manifest(probe_train[i]));
      const auto test = registry::load_manifest(probe_test);
      const auto p = eval::train_linear_probe(eval::extract_manifest(pool, *extractor), eval::class_labels(pool),
                                              probe_n, probe_seed);
      std::vector<std::string> sites;
      for (const auto& r : test.records) sites.push_back(r.site);
      const auto res = eval::score_predictions("probe", p.predict(eval::extract_manifest(test, *extractor)),
                                               eval::class_labels(test), sites);
      std::cout << "balanced accuracy\t" << res.overall << "\nTSS AVG\t" << res.tss_avg << '\n';
      for (const auto& s : res.single_class_sites) std::cerr << "note: site " << s << " holds a single class\n";
      if (!probe_out.empty())
        write_json(probe_out, {{"overall", res.overall},
                               {"tss_avg", res.tss_avg},
                               {"per_site", res.per_site},
                               {"single_class_sites", res.single_class_sites},
                               {"extractor", extractor->name()},
                               {"n_per_class", probe_n},
                               {"seed", probe_seed}});
    } else if (*study_fid) {
      const auto config = pipeline::load_config(study_config);
      const auto dir = study_dir(config, study_run_dir);
      const auto r = pipeline::run_fid_study(config, dir, log_line);
      for (const auto& s : r.seeds)
        std::cout << "seed " << s.seed << ": CLS " << s.cls.fid.macro_average << "  MeDi " << s.medi.fid.macro_average
                  << '\n';
      std::cout << "MeDi lower macro FID in " << r.medi_wins() << " of " << r.seeds.size() << " seeds; reports in "
                << (dir / "reports").string() << '\n';
    } else if (*study_shift) {
      const auto config = pipeline::load_config(study_config);
      const auto dir = study_dir(config, study_run_dir);
      const auto r = pipeline::run_shift_study(config, dir, log_line);
      std::cout << pipeline::render_shift_markdown(r);
    } else if (*report) {
      const fs::path dir(report_dir);
      for (const auto& p : pipeline::rerender_reports(dir / "reports")) std::cout << "rendered " << p.string() << '\n';
      const pipeline::RunLedger ledger(dir);
      const auto bad = ledger.verify();
      for (const auto& b : bad) std::cerr << "ledger mismatch: " << b << '\n';
      if (!bad.empty()) return 2;
      std::cout << "ledger intact (" << ledger.entries().size() << " entries)\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "medi: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
