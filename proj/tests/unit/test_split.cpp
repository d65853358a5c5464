#include "doctest.h"

#include "medi/split.hpp"

#include <set>

using namespace medi;
using namespace medi::registry;

namespace {

// Class c has records at every (site, race) pair of the given lists.
DatasetManifest grid(const std::vector<std::string>& classes, const std::vector<std::string>& sites,
                     const std::vector<std::string>& races, int per_cell = 2) {
  std::vector<PatchRecord> recs;
  int id = 0;
  for (const auto& c : classes)
    for (const auto& s : sites)
      for (const auto& r : races)
        for (int i = 0; i < per_cell; ++i) {
          PatchRecord p{"r" + std::to_string(id++), "", "p", c, s};
          p.race = r;
          recs.push_back(p);
        }
  return make_manifest(recs);
}

}  // namespace

TEST_CASE("holdout count rule") {
  CHECK(split::holdout_count(10, 0.3) == 3);
  CHECK(split::holdout_count(3, 0.3) == 1);
  CHECK(split::holdout_count(2, 0.3) == 1);
  CHECK(split::holdout_count(1, 0.3) == 0);
  CHECK(split::holdout_count(7, 0.3) == 2);
}

TEST_CASE("ten combinations per class hold out exactly three, verified by recount") {
  const auto m = grid({"a", "b"}, {"s0", "s1", "s2", "s3", "s4"}, {"r0", "r1"});
  const auto s = split::holdout_split(m, 0.3, {"site", "race"}, 42);
  for (const auto& cls : {"a", "b"}) {
    std::set<std::pair<std::string, std::string>> held;
    for (const auto& r : s.holdout.records)
      if (r.class_label == cls) held.insert({r.site, r.race});
    CHECK(held.size() == 3);
    CHECK(s.excluded.at(cls).size() == 3);
    for (const auto& r : s.train.records)
      if (r.class_label == cls) CHECK_FALSE(held.contains({r.site, r.race}));
  }
  CHECK(s.train.size() + s.holdout.size() == m.size());
}

TEST_CASE("holdout split is reproducible from its seed") {
  const auto m = grid({"a", "b", "c"}, {"s0", "s1", "s2", "s3"}, {"r0", "r1", "r2"});
  const auto x = split::holdout_split(m, 0.3, {"site", "race"}, 5);
  const auto y = split::holdout_split(m, 0.3, {"site", "race"}, 5);
  CHECK(x.holdout.records == y.holdout.records);
  CHECK(x.excluded == y.excluded);
}

TEST_CASE("holdout split validates its inputs") {
  const auto m = grid({"a"}, {"s0", "s1"}, {"r0"});
  CHECK_THROWS_AS(split::holdout_split(m, 0.0, {"site"}, 1), Error);
  CHECK_THROWS_AS(split::holdout_split(m, 1.0, {"site"}, 1), Error);
  CHECK_THROWS_AS(split::holdout_split(m, 0.3, {"colour"}, 1), Error);
}

TEST_CASE("reserved sites go to the holdout wholesale") {
  const auto m = grid({"a", "b"}, {"s0", "s1", "s2", "s3"}, {"r0"});
  const auto s = split::holdout_split(m, 0.3, {"site"}, 3, {"s3"});
  for (const auto& r : s.train.records) CHECK(r.site != "s3");
  long reserved = 0;
  for (const auto& r : s.holdout.records) reserved += r.site == "s3";
  CHECK(reserved == 4);
}

TEST_CASE("correlated split: one site per class, test at unseen sites") {
  const auto pool = grid({"a", "b"}, {"s0", "s1", "s2"}, {"r0"}, 3);
  const auto test = grid({"a", "b"}, {"s7", "s8"}, {"r0"}, 1);
  split::TaskSpec task{"t", {"a", "b"}, {{"a", "s2"}, {"b", "s0"}}, 1};
  const auto s = split::correlated_task_split(pool, test, task, 0);
  for (const auto& r : s.train.records) CHECK(r.site == (r.class_label == "a" ? "s2" : "s0"));
  CHECK(s.train.size() == 6);
  CHECK(s.test.size() == 4);
  CHECK(s.test_sites == std::vector<std::string>{"s7", "s8"});

  task.assignment = {{"a", "s1"}, {"b", "s1"}};
  CHECK_THROWS_AS(split::correlated_task_split(pool, test, task, 0), Error);
}

TEST_CASE("three sites and two classes give six runs") {
  const auto pool = grid({"a", "b"}, {"s0", "s1", "s2"}, {"r0"});
  const auto test = grid({"a", "b"}, {"s9"}, {"r0"});
  const auto runs = split::enumerate_runs(pool, test, {"t", {"a", "b"}, {}, 1});
  REQUIRE(runs.size() == 6);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : runs) seen.insert({r.assignment.at("a"), r.assignment.at("b")});
  CHECK(seen.size() == 6);
  CHECK(split::count_assignments(pool, {"t", {"a", "b"}, {}, 1}, 100) == 6);
  CHECK_THROWS_AS(split::enumerate_runs(pool, test, {"t", {"a", "b"}, {}, 1}, 5), Error);
}

TEST_CASE("too few sites for a one-site-per-class split is an error") {
  const auto pool = grid({"a", "b", "c"}, {"s0", "s1"}, {"r0"});
  CHECK_THROWS_AS(split::correlated_task_split(pool, pool, {"t", {"a", "b", "c"}, {}, 1}, 0), Error);
}
