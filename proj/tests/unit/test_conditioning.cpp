#include "doctest.h"

#include "medi/diffusion/conditioning.hpp"
#include "medi/diffusion/unet.hpp"
#include "medi/error.hpp"

#include <cmath>

using namespace medi;
using namespace medi::diffusion;

namespace {

ConditioningSpec medi_spec(int d_class = 64, int d_e = 64, int d_t = 128) {
  ConditioningSpec s;
  s.d_class = d_class;
  s.d_e = d_e;
  s.d_t = d_t;
  s.class_cardinality = 32;
  s.meta_attributes = {"site"};
  s.meta_cardinalities = {180};
  return s;
}

}  // namespace

TEST_CASE("default widths satisfy the constraint") {
  CHECK_NOTHROW(medi_spec().validate());
  CHECK_NOTHROW(ConditioningSpec::class_only_spec(128, 32).validate());
}

TEST_CASE("width mismatch is reported with both widths") {
  CHECK_THROWS_WITH_AS(medi_spec(64, 32, 128).validate(), doctest::Contains("64 + 1*32"), ConfigError);
  auto s = medi_spec(32, 32, 128);
  s.meta_attributes = {"site", "race", "gender"};
  s.meta_cardinalities = {4, 3, 2};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("k = 0 builds exactly the class embedding") {
  const auto spec = ConditioningSpec::class_only_spec(8, 3);
  EmbeddingTables<double> t(spec);
  std::mt19937_64 rng(1);
  t.init(rng);
  const auto z = t.build(Condition{2, {}});
  CHECK(z == t.class_table().table.value.row(2).transpose());
}

TEST_CASE("conditioning vector is the concatenation class | meta_1 | meta_2") {
  auto spec = medi_spec(2, 3, 8);
  spec.meta_attributes = {"site", "race"};
  spec.meta_cardinalities = {4, 2};
  EmbeddingTables<double> t(spec);
  std::mt19937_64 rng(2);
  t.init(rng);
  const Condition c{5, {3, 1}};
  const auto z = t.build(c);
  REQUIRE(z.size() == 8);
  CHECK(z.head(2) == t.class_table().table.value.row(5).transpose());
  CHECK(z.segment(2, 3) == t.meta_table(0).table.value.row(3).transpose());
  CHECK(z.tail(3) == t.meta_table(1).table.value.row(1).transpose());
}

TEST_CASE("out-of-range and wrong-arity tuples are rejected") {
  EmbeddingTables<float> t(medi_spec());
  CHECK_THROWS_AS(t.build(Condition{32, {0}}), Error);
  CHECK_THROWS_AS(t.build(Condition{0, {180}}), Error);
  CHECK_THROWS_AS(t.build(Condition{0, {}}), Error);
}

TEST_CASE("combine_with_timestep adds and refuses width mismatch") {
  Mat<float> zt = Mat<float>::Constant(4, 2, 1.0f), zc = Mat<float>::Constant(4, 2, 0.5f);
  CHECK(combine_with_timestep(zt, zc).isApproxToConstant(1.5f));
  CHECK_THROWS_WITH_AS(combine_with_timestep(zt, Mat<float>(3, 2)), doctest::Contains("width 3"), Error);
}

TEST_CASE("embedding gradients land only on the rows that were used") {
  auto spec = medi_spec(2, 2, 4);
  spec.class_cardinality = 3;
  spec.meta_cardinalities = {3};
  EmbeddingTables<double> t(spec);
  std::mt19937_64 rng(3);
  t.init(rng);
  for (auto* p : t.params()) p->zero_grad();
  const std::vector<Condition> conds{{0, {2}}, {0, {1}}};
  Mat<double> g = Mat<double>::Ones(4, 2);
  t.backward(conds, g);
  const auto& cg = t.class_table().table.grad;
  CHECK(cg.row(0).isApproxToConstant(2.0));
  CHECK(cg.row(1).isZero());
  CHECK(cg.row(2).isZero());
  const auto& mg = t.meta_table(0).table.grad;
  CHECK(mg.row(0).isZero());
  CHECK(mg.row(1).isApproxToConstant(1.0));
  CHECK(mg.row(2).isApproxToConstant(1.0));
}

TEST_CASE("odd timestep widths are accepted") {
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.image_size = 4;
  cfg.base_channels = 2;
  cfg.channel_multiplier = 1;
  cfg.groups = 1;
  auto spec = medi_spec(3, 2, 5);
  spec.meta_cardinalities = {2};
  UNet<double> net(cfg, spec);
  const std::vector<int> t{7};
  const auto f = timestep_features<double>(t, 5);
  CHECK(f(4, 0) == 0.0);
  CHECK(f(0, 0) == doctest::Approx(std::sin(7.0)));
}
