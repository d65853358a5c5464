#include "doctest.h"

#include "medi/diffusion/checkpoint.hpp"
#include "medi/error.hpp"

#include <filesystem>
#include <fstream>

using namespace medi;
using namespace medi::diffusion;
namespace fs = std::filesystem;

namespace {

CheckpointMeta small_meta() {
  CheckpointMeta m;
  m.unet.in_channels = 3;
  m.unet.image_size = 4;
  m.unet.base_channels = 4;
  m.unet.groups = 2;
  m.spec.d_class = 4;
  m.spec.d_e = 2;
  m.spec.d_t = 8;
  m.spec.class_cardinality = 2;
  m.spec.meta_attributes = {"site", "race"};
  m.spec.meta_cardinalities = {3, 2};
  m.class_vocab = {"LUAD", "LUSC"};
  m.meta_vocabs = {{"A1", "B2", "C3"}, {"asian", "white"}};
  m.schema_fingerprint = "abc123";
  m.training = {{"steps", 7}};
  return m;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "medi_unit_checkpoint";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("checkpoint round trip preserves metadata and predictions") {
  const auto meta = small_meta();
  DenoiserModel model(meta.unet, meta.spec, 11);
  std::mt19937_64 rng(12);
  model.net().init(rng, false);
  const auto path = temp_file("rt.ckpt");
  save_checkpoint(path, meta, model);
  const auto loaded = load_checkpoint(path);

  CHECK(loaded.meta.unet == meta.unet);
  CHECK(loaded.meta.spec == meta.spec);
  CHECK(loaded.meta.schedule == meta.schedule);
  CHECK(loaded.meta.class_vocab == meta.class_vocab);
  CHECK(loaded.meta.meta_vocabs == meta.meta_vocabs);
  CHECK(loaded.meta.schema_fingerprint == "abc123");
  CHECK(loaded.meta.training == meta.training);

  FeatureMap<float> x(3, 2, 4, 4);
  x.data.setRandom();
  const std::vector<int> t{10, 900};
  const std::vector<Condition> c{{0, {2, 1}}, {1, {0, 0}}};
  CHECK(loaded.model.predict(x, t, c).data == model.predict(x, t, c).data);
}

TEST_CASE("condition_for maps names through the vocabularies") {
  const auto meta = small_meta();
  CHECK(meta.condition_for("LUSC", {"C3", "asian"}) == Condition{1, {2, 0}});
  CHECK_THROWS_WITH_AS(meta.condition_for("LUSC", {"Z9", "asian"}), doctest::Contains("Z9"), Error);
  CHECK_THROWS_AS(meta.condition_for("BRCA", {"A1", "asian"}), Error);
  CHECK_THROWS_AS(meta.condition_for("LUAD", {"A1"}), Error);
}

TEST_CASE("damaged files are refused") {
  const auto meta = small_meta();
  DenoiserModel model(meta.unet, meta.spec, 1);
  const auto path = temp_file("cut.ckpt");
  save_checkpoint(path, meta, model);
  fs::resize_file(path, fs::file_size(path) - 8);
  CHECK_THROWS_AS(load_checkpoint(path), Error);

  const auto junk = temp_file("junk.ckpt");
  std::ofstream(junk) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(junk), Error);
  CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ckpt")), Error);
}
