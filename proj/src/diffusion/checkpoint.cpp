#include "medi/diffusion/checkpoint.hpp"

#include "medi/error.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace medi::diffusion {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'D', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void write_pod(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw Error("truncated checkpoint");
  return v;
}

}  // namespace

nlohmann::json to_json(const UNetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"image_size", c.image_size},
          {"base_channels", c.base_channels},
          {"channel_multiplier", c.channel_multiplier},
          {"groups", c.groups}};
}

nlohmann::json to_json(const ConditioningSpec& s) {
  return {{"d_class", s.d_class},
          {"d_e", s.d_e},
          {"d_t", s.d_t},
          {"class_cardinality", s.class_cardinality},
          {"meta_attributes", s.meta_attributes},
          {"meta_cardinalities", s.meta_cardinalities}};
}

nlohmann::json to_json(const ScheduleConfig& s) {
  return {{"num_timesteps", s.num_timesteps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.image_size = j.value("image_size", c.image_size);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.channel_multiplier = j.value("channel_multiplier", c.channel_multiplier);
  c.groups = j.value("groups", c.groups);
  return c;
}

ConditioningSpec conditioning_spec_from_json(const nlohmann::json& j) {
  ConditioningSpec s;
  s.d_class = j.at("d_class").get<int>();
  s.d_e = j.value("d_e", 0);
  s.d_t = j.at("d_t").get<int>();
  s.class_cardinality = j.at("class_cardinality").get<int>();
  s.meta_attributes = j.value("meta_attributes", std::vector<std::string>{});
  s.meta_cardinalities = j.value("meta_cardinalities", std::vector<int>{});
  return s;
}

ScheduleConfig schedule_config_from_json(const nlohmann::json& j) {
  ScheduleConfig s;
  s.num_timesteps = j.value("num_timesteps", s.num_timesteps);
  s.beta_start = j.value("beta_start", s.beta_start);
  s.beta_end = j.value("beta_end", s.beta_end);
  return s;
}

Condition CheckpointMeta::condition_for(const std::string& class_label,
                                        const std::vector<std::string>& meta_values) const {
  if (meta_values.size() != meta_vocabs.size())
    throw Error("model expects " + std::to_string(meta_vocabs.size()) + " metadata values, got " +
                std::to_string(meta_values.size()));
  auto find = [](const std::vector<std::string>& vocab, const std::string& v, const std::string& what) {
    const auto it = std::find(vocab.begin(), vocab.end(), v);
    if (it == vocab.end()) throw Error(what + " '" + v + "' unknown to the checkpoint");
    return static_cast<int>(it - vocab.begin());
  };
  Condition c;
  c.class_id = find(class_vocab, class_label, "class");
  for (std::size_t i = 0; i < meta_values.size(); ++i)
    c.meta_ids.push_back(find(meta_vocabs[i], meta_values[i], spec.meta_attributes[i]));
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const DenoiserModel& model) {
  nlohmann::json header;
  header["unet"] = to_json(meta.unet);
  header["conditioning"] = to_json(meta.spec);
  header["schedule"] = to_json(meta.schedule);
  header["class_vocab"] = meta.class_vocab;
  header["meta_vocabs"] = meta.meta_vocabs;
  header["schema_fingerprint"] = meta.schema_fingerprint;
  header["training"] = meta.training;
  nlohmann::json shapes = nlohmann::json::array();
  for (const auto* p : model.net().params())
    shapes.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  header["params"] = shapes;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : model.net().params())
    out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  if (!out) throw Error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error(path.string() + " is not a checkpoint");
  if (read_pod<std::uint32_t>(in) != kVersion) throw Error(path.string() + ": unsupported checkpoint version");
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text);

  CheckpointMeta meta;
  meta.unet = unet_config_from_json(header.at("unet"));
  meta.spec = conditioning_spec_from_json(header.at("conditioning"));
  meta.schedule = schedule_config_from_json(header.at("schedule"));
  meta.class_vocab = header.at("class_vocab").get<std::vector<std::string>>();
  meta.meta_vocabs = header.at("meta_vocabs").get<std::vector<std::vector<std::string>>>();
  meta.schema_fingerprint = header.at("schema_fingerprint").get<std::string>();
  meta.training = header.value("training", nlohmann::json::object());

  UNet<float> net(meta.unet, meta.spec);
  const auto& shapes = header.at("params");
  auto params = net.params();
  if (shapes.size() != params.size()) throw Error("checkpoint parameter count does not match the architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    if (shapes[i].at("name") != p->name || shapes[i].at("rows") != p->value.rows() ||
        shapes[i].at("cols") != p->value.cols())
      throw Error("checkpoint parameter '" + shapes[i].at("name").get<std::string>() + "' does not match '" + p->name +
                  "'");
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    if (!in) throw Error("truncated checkpoint parameters");
  }
  return {std::move(meta), DenoiserModel(std::move(net))};
}

}  // namespace medi::diffusion
