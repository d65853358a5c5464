#include "doctest.h"

#include "medi/diffusion/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>

using namespace medi;
using namespace medi::diffusion;

namespace {

UNetConfig tiny_unet() {
  UNetConfig c;
  c.in_channels = 1;
  c.image_size = 4;
  c.base_channels = 4;
  c.channel_multiplier = 2;
  c.groups = 2;
  return c;
}

ConditioningSpec site_spec() {
  ConditioningSpec s;
  s.d_class = 4;
  s.d_e = 4;
  s.d_t = 8;
  s.class_cardinality = 2;
  s.meta_attributes = {"site"};
  s.meta_cardinalities = {2};
  return s;
}

std::vector<TrainingExample> stripes(int n) {
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.id = "ex" + std::to_string(i);
    ex.image.resize(16);
    for (int p = 0; p < 16; ++p) ex.image[static_cast<std::size_t>(p)] = (p / 4) % 2 == i % 2 ? 0.8f : -0.8f;
    ex.cond = Condition{i % 2, {0}};
    out.push_back(ex);
  }
  return out;
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return std::accumulate(v.begin() + static_cast<long>(from), v.begin() + static_cast<long>(to), 0.0) /
         static_cast<double>(to - from);
}

struct NanDenoiser : TrainableDenoiser {
  ConditioningSpec spec = ConditioningSpec::class_only_spec(8, 2);
  nn::Param<float> p{"w", 1, 1};
  const ConditioningSpec& conditioning() const override { return spec; }
  FeatureMap<float> predict(const FeatureMap<float>& x, std::span<const int>, std::span<const Condition>) const override {
    FeatureMap<float> out = x;
    out.data.setConstant(std::numeric_limits<float>::quiet_NaN());
    return out;
  }
  FeatureMap<float> forward_train(const FeatureMap<float>& x, std::span<const int> t,
                                  std::span<const Condition> c) override {
    return predict(x, t, c);
  }
  void backward(const FeatureMap<float>&) override {}
  std::vector<nn::Param<float>*> parameters() override { return {&p}; }
};

}  // namespace

TEST_CASE("training loss falls on a tiny model") {
  DenoiserModel model(tiny_unet(), site_spec(), 1);
  const auto data = stripes(8);
  TrainingSpec spec;
  spec.steps = 300;
  spec.lr = 3e-3;
  spec.batch_size = 8;
  spec.seed = 2;
  const auto hist = train(model, data, NoiseSchedule::linear(), spec, 1, 4);
  REQUIRE(hist.size() == 300);
  CHECK(mean(hist, 250, 300) < 0.7 * mean(hist, 0, 50));
}

TEST_CASE("training is reproducible from the seed") {
  const auto data = stripes(4);
  TrainingSpec spec;
  spec.steps = 5;
  spec.lr = 1e-3;
  spec.batch_size = 4;
  DenoiserModel a(tiny_unet(), site_spec(), 3), b(tiny_unet(), site_spec(), 3);
  CHECK(train(a, data, NoiseSchedule::linear(), spec, 1, 4) == train(b, data, NoiseSchedule::linear(), spec, 1, 4));
}

TEST_CASE("embedding rows of values absent from the batch are left alone") {
  DenoiserModel model(tiny_unet(), site_spec(), 4);
  auto& tables = model.net().tables();
  const Mat<float> class_before = tables.class_table().table.value;
  const Mat<float> site_before = tables.meta_table(0).table.value;

  // every example is class 0 at site 1
  auto data = stripes(4);
  for (auto& ex : data) ex.cond = Condition{0, {1}};
  std::vector<const TrainingExample*> batch;
  for (const auto& ex : data) batch.push_back(&ex);
  Adam adam({1e-2});
  std::mt19937_64 rng(5);
  const auto schedule = NoiseSchedule::linear();
  for (int i = 0; i < 5; ++i) train_step(batch, model, schedule, adam, rng, 1, 4);

  CHECK(tables.class_table().table.value.row(1) == class_before.row(1));
  CHECK(tables.meta_table(0).table.value.row(0) == site_before.row(0));
  CHECK(tables.class_table().table.value.row(0) != class_before.row(0));
  CHECK(tables.meta_table(0).table.value.row(1) != site_before.row(1));
}

TEST_CASE("a non-finite loss stops training with step, lr and batch ids") {
  NanDenoiser model;
  std::vector<TrainingExample> data(2);
  data[0].id = "patch-a";
  data[1].id = "patch-b";
  for (auto& ex : data) ex.image.assign(4, 0.0f);
  std::vector<const TrainingExample*> batch{&data[0], &data[1]};
  Adam adam({0.125});
  std::mt19937_64 rng(1);
  try {
    train_step(batch, model, NoiseSchedule::linear(), adam, rng, 1, 2);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find("0.125") != std::string::npos);
    CHECK(msg.find("patch-a") != std::string::npos);
    CHECK(msg.find("patch-b") != std::string::npos);
  }
}

TEST_CASE("gradient clipping bounds the first Adam step") {
  // With bias correction the first update is lr * sign(g) regardless of the
  // gradient's size, so clipping shows up only in the moments; check the
  // update magnitude instead.
  nn::Param<float> p("w", 2, 1);
  p.grad << 300.0f, -400.0f;
  Adam adam({0.1, 0.9, 0.999, 1e-8, 1.0});
  std::vector<nn::Param<float>*> ps{&p};
  adam.step(ps);
  CHECK(p.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-4));
  CHECK(p.value(1, 0) == doctest::Approx(0.1).epsilon(1e-4));
}
