#include "medi/sampling.hpp"

#include "medi/error.hpp"
#include "medi/image_io.hpp"
#include "medi/pipeline/hash.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace medi::sampling {

namespace fs = std::filesystem;

namespace {

struct Item {
  std::size_t entry;
  long index;
};

struct Done {
  std::string file;
  std::string sha;
};

std::map<std::pair<std::size_t, long>, Done> read_progress(const fs::path& path, const fs::path& dir) {
  std::map<std::pair<std::size_t, long>, Done> done;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      break;  // torn final line from an interrupted run
    }
    Done d{j.at("file").get<std::string>(), j.at("sha256").get<std::string>()};
    if (fs::exists(dir / d.file) && pipeline::sha256_file(dir / d.file) == d.sha)
      done[{j.at("entry").get<std::size_t>(), j.at("index").get<long>()}] = d;
  }
  return done;
}

}  // namespace

registry::DatasetManifest execute_plan(const SamplingPlan& plan, const diffusion::CheckpointMeta& meta,
                                       const diffusion::Denoiser& model, const fs::path& output_dir,
                                       const ExecuteOptions& options) {
  plan.validate();
  std::vector<std::string> expected{"class"};
  expected.insert(expected.end(), meta.spec.meta_attributes.begin(), meta.spec.meta_attributes.end());
  if (plan.attributes != expected) {
    std::string want, got;
    for (const auto& a : expected) want += (want.empty() ? "" : ",") + a;
    for (const auto& a : plan.attributes) got += (got.empty() ? "" : ",") + a;
    throw Error("plan conditions on (" + got + ") but the checkpoint expects (" + want + ")");
  }
  std::vector<diffusion::Condition> conds;
  for (const auto& e : plan.entries)
    conds.push_back(meta.condition_for(e.values.front(), {e.values.begin() + 1, e.values.end()}));

  fs::create_directories(output_dir / "images");
  const fs::path plan_path = output_dir / "plan.json";
  const fs::path progress_path = output_dir / "progress.jsonl";
  const nlohmann::json plan_json = to_json(plan);
  if (fs::exists(plan_path)) {
    std::ifstream in(plan_path);
    if (nlohmann::json::parse(in) != plan_json)
      throw Error(output_dir.string() + " already holds a different plan; use a fresh output directory");
  } else {
    std::ofstream out(plan_path);
    out << plan_json.dump(2) << '\n';
    if (!out) throw Error("cannot write " + plan_path.string());
  }

  auto done = read_progress(progress_path, output_dir);
  std::vector<Item> pending;
  for (std::size_t e = 0; e < plan.entries.size(); ++e)
    for (long j = 0; j < plan.entries[e].count; ++j)
      if (!done.contains({e, j})) pending.push_back({e, j});

  const int channels = meta.unet.in_channels, size = meta.unet.image_size;
  const auto schedule = meta.schedule.build();
  std::ofstream progress(progress_path, std::ios::app);
  if (!progress) throw Error("cannot write " + progress_path.string());
  long finished = plan.total - static_cast<long>(pending.size());
  const std::size_t bs = static_cast<std::size_t>(std::max(1, options.batch_size));
  for (std::size_t start = 0; start < pending.size(); start += bs) {
    const std::size_t n = std::min(bs, pending.size() - start);
    std::vector<diffusion::Condition> batch_conds;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < n; ++i) {
      const Item& it = pending[start + i];
      batch_conds.push_back(conds[it.entry]);
      seeds.push_back(image_seed(plan.seed, plan.entries[it.entry].values, it.index));
    }
    const auto images = diffusion::ddim_sample(model, schedule, batch_conds, seeds, channels, size, options.ddim);
    for (std::size_t i = 0; i < n; ++i) {
      const Item& it = pending[start + i];
      const auto bytes = image::encode_ppm(image::from_chw(images.sample(static_cast<int>(i)), size, size));
      const std::string sha = pipeline::sha256_hex(bytes);
      const std::string file = "images/" + sha + ".ppm";
      {
        std::ofstream out(output_dir / file, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("failed writing " + (output_dir / file).string() + "; rerun to resume");
      }
      done[{it.entry, it.index}] = {file, sha};
      progress << nlohmann::json{{"entry", it.entry}, {"index", it.index}, {"file", file}, {"sha256", sha}}.dump()
               << '\n';
    }
    progress.flush();
    if (!progress) throw Error("failed writing " + progress_path.string() + "; rerun to resume");
    finished += static_cast<long>(n);
    if (options.on_progress) options.on_progress(finished, plan.total);
  }

  std::vector<registry::PatchRecord> records;
  records.reserve(static_cast<std::size_t>(plan.total));
  long serial = 0;
  for (std::size_t e = 0; e < plan.entries.size(); ++e) {
    const auto& entry = plan.entries[e];
    for (long j = 0; j < entry.count; ++j, ++serial) {
      const Done& d = done.at({e, j});
      registry::PatchRecord r;
      std::ostringstream id;
      id << "syn-" << d.sha.substr(0, 12) << '-' << serial;
      r.patch_id = id.str();
      r.image_ref = d.file;
      r.patient_id = "synthetic";
      r.class_label = entry.values[0];
      r.site = registry::kUnknown;
      for (std::size_t a = 1; a < plan.attributes.size(); ++a) {
        const auto& name = plan.attributes[a];
        if (name == "site") r.site = entry.values[a];
        else if (name == "race") r.race = entry.values[a];
        else if (name == "gender") r.gender = entry.values[a];
      }
      r.synthetic = true;
      records.push_back(std::move(r));
    }
  }
  auto manifest = registry::make_manifest(std::move(records), output_dir);
  registry::save_manifest(manifest, output_dir / "manifest.tsv");
  return manifest;
}

}  // namespace medi::sampling
