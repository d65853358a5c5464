#include "doctest.h"

#include "medi/error.hpp"
#include "medi/pipeline/config.hpp"
#include "medi/pipeline/ledger.hpp"
#include "medi/pipeline/report.hpp"

#include <filesystem>
#include <fstream>

using namespace medi;
using namespace medi::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "medi_unit_pipeline" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ShiftStudyReport sample_shift_report() {
  ShiftStudyReport r;
  r.name = "demo";
  r.extractor = "random-conv";
  r.n_per_class = 20;
  for (const auto& arm : shift_arms()) {
    eval::ProbeResult a, b;
    a.overall = 70;
    b.overall = 80;
    a.tss_avg = 60;
    b.tss_avg = 66;
    r.aggregates["toy"][arm] = eval::aggregate_runs({a, b});
  }
  ShiftRunResult run;
  run.task = "toy";
  run.run = "c0->s0 c1->s1";
  for (const auto& arm : shift_arms()) run.arms[arm].overall = 80;
  r.runs.push_back(run);
  return r;
}

}  // namespace

TEST_CASE("config survives a JSON round trip") {
  ExperimentConfig c;
  c.name = "rt";
  c.seeds = {0, 4};
  c.dataset.toy = ToySpec{};
  c.dataset.toy->sites = {"s0", "s1", "s2"};
  c.split.reserved_sites = {"s2"};
  c.model.d_t = 16;
  c.model.d_class = 8;
  c.model.d_e = 8;
  c.training.steps = 12;
  c.evaluation.tasks.push_back({"toy", {"c0", "c1"}, {}, 5});
  const auto j = to_json(c);
  CHECK(to_json(config_from_json(j)) == j);
}

TEST_CASE("unknown config keys are rejected") {
  auto j = to_json(ExperimentConfig{});
  j["trianing"] = nlohmann::json::object();
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  auto k = to_json(ExperimentConfig{});
  k["model"]["d_z"] = 3;
  CHECK_THROWS_WITH_AS(config_from_json(k), doctest::Contains("d_z"), ConfigError);
}

TEST_CASE("inconsistent widths fail validation") {
  ExperimentConfig c;
  c.model.d_t = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("ledger detects modified and missing artifacts") {
  const auto dir = fresh_dir("ledger");
  std::ofstream(dir / "a.txt") << "alpha";
  std::ofstream(dir / "b.txt") << "beta";
  {
    RunLedger ledger(dir);
    ledger.record("config", dir / "a.txt", {{"note", 1}});
    ledger.record("report", "b.txt");
    ledger.status("done");
    CHECK(ledger.verify().empty());
  }
  RunLedger reopened(dir);
  REQUIRE(reopened.entries().size() == 3);
  CHECK(reopened.entries()[0].path == "a.txt");
  CHECK(reopened.entries()[0].sha256 == "8ed3f6ad685b959ead7022518e1af76cd816f8e8ec7ccdda1ed4018e8f2223f8");
  CHECK(reopened.find("b.txt") != nullptr);

  std::ofstream(dir / "a.txt") << "alpha!";
  fs::remove(dir / "b.txt");
  const auto bad = reopened.verify();
  CHECK(bad.size() == 2);
}

TEST_CASE("shift table uses the method labels and mean ± SE cells") {
  const auto r = sample_shift_report();
  const auto md = render_shift_markdown(r);
  CHECK(md.find("No syn. data") != std::string::npos);
  CHECK(md.find("CLS only") != std::string::npos);
  CHECK(md.find("MeDi") != std::string::npos);
  CHECK(md.find("toy TSS AVG") != std::string::npos);
  CHECK(md.find("75.00 ± 3.54") != std::string::npos);
  CHECK(to_json(shift_report_from_json(to_json(r))) == to_json(r));
}

TEST_CASE("reports can be re-rendered from their JSON") {
  const auto dir = fresh_dir("reports");
  const auto written = write_shift_report(sample_shift_report(), dir);
  for (const auto& p : written) CHECK(fs::exists(p));
  std::ifstream in(dir / "shift_table.md");
  const std::string before((std::istreambuf_iterator<char>(in)), {});
  fs::remove(dir / "shift_table.md");
  rerender_reports(dir);
  std::ifstream again(dir / "shift_table.md");
  const std::string after((std::istreambuf_iterator<char>(again)), {});
  CHECK(before == after);
}

TEST_CASE("shipped configs load and validate") {
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(MEDI_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    INFO(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()).validate());
    ++seen;
  }
  CHECK(seen >= 5);
}
