#include "doctest.h"

#include "medi/error.hpp"
#include "medi/eval/metrics.hpp"
#include "medi/eval/probe.hpp"

#include <algorithm>
#include <random>

using namespace medi::eval;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<std::string> y;
};

Blobs blobs(int per_class, double sep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const std::vector<std::string> names{"a", "b", "c"};
  Blobs b;
  b.x.resize(3 * per_class, 5);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < per_class; ++i) {
      const int row = k * per_class + i;
      for (int j = 0; j < 5; ++j) b.x(row, j) = g(rng) + (j == k ? sep : 0.0);
      b.y.push_back(names[static_cast<std::size_t>(k)]);
    }
  return b;
}

}  // namespace

TEST_CASE("well separated classes are recovered") {
  const auto train = blobs(50, 10, 1), test = blobs(100, 10, 2);
  const auto probe = train_linear_probe(train.x, train.y, 20, 3);
  CHECK(probe.classes == std::vector<std::string>{"a", "b", "c"});
  CHECK(probe.support.size() == 60);
  CHECK(probe.final_gradient <= 1e-6);
  CHECK(balanced_accuracy(probe.predict(test.x), test.y) == doctest::Approx(100.0));
}

TEST_CASE("shuffled labels give chance accuracy") {
  auto train = blobs(200, 0, 4);
  const auto test = blobs(1000, 0, 5);
  std::mt19937_64 rng(6);
  std::shuffle(train.y.begin(), train.y.end(), rng);
  const auto probe = train_linear_probe(train.x, train.y, 100, 7);
  const double acc = balanced_accuracy(probe.predict(test.x), test.y);
  CHECK(acc > 100.0 / 3 - 5);
  CHECK(acc < 100.0 / 3 + 5);
}

TEST_CASE("probe fitting is deterministic in the seed") {
  const auto train = blobs(50, 1, 8);
  const auto p1 = train_linear_probe(train.x, train.y, 20, 9);
  const auto p2 = train_linear_probe(train.x, train.y, 20, 9);
  const auto p3 = train_linear_probe(train.x, train.y, 20, 10);
  CHECK(p1.support == p2.support);
  CHECK(p1.weights == p2.weights);
  CHECK(p1.support != p3.support);
}

TEST_CASE("a class without enough samples is named") {
  const auto train = blobs(10, 1, 11);
  CHECK_THROWS_WITH(train_linear_probe(train.x, train.y, 20, 1), doctest::Contains("'a'"));
}
