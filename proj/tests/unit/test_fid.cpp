#include "doctest.h"

#include "medi/error.hpp"
#include "medi/eval/fid.hpp"

#include <random>

using namespace medi::eval;

namespace {

Eigen::MatrixXd gaussian(int n, int d, double shift, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = shift + scale * g(rng);
  return m;
}

}  // namespace

TEST_CASE("identical sets score zero") {
  const auto x = gaussian(500, 3, 0, 1, 1);
  CHECK(fid(x, x) == doctest::Approx(0).epsilon(1e-9));
}

TEST_CASE("one-dimensional closed form") {
  // (m1 - m2)^2 + s1^2 + s2^2 - 2 s1 s2 with exact sample moments
  Eigen::MatrixXd a(4, 1), b(4, 1);
  a << -1, 1, -1, 1;  // mean 0, unbiased var 4/3
  b << 1, 5, 1, 5;    // mean 3, unbiased var 16/3
  const double va = 4.0 / 3 + 1e-6, vb = 16.0 / 3 + 1e-6;
  const double expect = 9 + va + vb - 2 * std::sqrt(va * vb);
  CHECK(fid(a, b) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("distance grows with the mean shift") {
  const auto base = gaussian(2000, 4, 0, 1, 2);
  double prev = fid(base, gaussian(2000, 4, 0.0, 1, 3));
  for (double shift : {0.5, 1.0, 2.0}) {
    const double f = fid(base, gaussian(2000, 4, shift, 1, 3));
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("per-class scores and skipped classes") {
  const auto ra = gaussian(300, 2, 0, 1, 4), rb = gaussian(300, 2, 0, 1, 5);
  const auto sa = gaussian(300, 2, 0, 1, 6), sb = gaussian(300, 2, 2, 1, 7);
  Eigen::MatrixXd real(601, 2), syn(600, 2);
  real << ra, rb, Eigen::RowVector2d(9, 9);
  syn << sa, sb;
  std::vector<std::string> rl(300, "A"), sl(300, "A");
  rl.insert(rl.end(), 300, "B");
  rl.push_back("C");
  sl.insert(sl.end(), 300, "B");
  const auto res = per_class_fid(real, rl, syn, sl);
  REQUIRE(res.per_class.size() == 2);
  CHECK(res.per_class.at("B") > res.per_class.at("A"));
  CHECK(res.macro_average == doctest::Approx((res.per_class.at("A") + res.per_class.at("B")) / 2));
  CHECK(res.skipped.contains("C"));
}

TEST_CASE("too few rows are an error") {
  Eigen::MatrixXd one(1, 2);
  one << 1, 2;
  CHECK_THROWS(summarize_features(one));
}
