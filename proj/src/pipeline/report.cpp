#include "medi/pipeline/report.hpp"

#include "medi/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace medi::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json fid_json(const eval::FIDResult& f) {
  return {{"overall", f.overall}, {"macro_average", f.macro_average}, {"per_class", f.per_class}, {"skipped", f.skipped}};
}

eval::FIDResult fid_from(const json& j) {
  eval::FIDResult f;
  f.overall = j.at("overall").get<double>();
  f.macro_average = j.at("macro_average").get<double>();
  f.per_class = j.at("per_class").get<std::map<std::string, double>>();
  f.skipped = j.value("skipped", std::map<std::string, std::string>{});
  return f;
}

json mean_se_json(const eval::MeanSE& m) {
  json j{{"mean", m.mean}, {"n", m.n}};
  j["se"] = m.se ? json(*m.se) : json(nullptr);
  return j;
}

eval::MeanSE mean_se_from(const json& j) {
  eval::MeanSE m;
  m.mean = j.at("mean").get<double>();
  m.n = j.at("n").get<std::size_t>();
  if (!j.at("se").is_null()) m.se = j.at("se").get<double>();
  return m;
}

std::string cell(const eval::MeanSE& m) {
  return fixed(m.mean) + " ± " + (m.se ? fixed(*m.se) : std::string("n/a"));
}

// Per-class mean FID over seeds for one arm.
std::map<std::string, double> mean_per_class(const FidStudyReport& r, bool medi) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& s : r.seeds)
    for (const auto& [cls, v] : (medi ? s.medi : s.cls).fid.per_class) {
      acc[cls].first += v;
      ++acc[cls].second;
    }
  std::map<std::string, double> out;
  for (const auto& [cls, p] : acc) out[cls] = p.first / p.second;
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

json to_json(const FidStudyReport& r) {
  json seeds = json::array();
  for (const auto& s : r.seeds)
    seeds.push_back({{"seed", s.seed},
                     {"medi_wins", s.medi_wins()},
                     {"cls", {{"images", s.cls.images}, {"fid", fid_json(s.cls.fid)}}},
                     {"medi", {{"images", s.medi.images}, {"fid", fid_json(s.medi.fid)}}}});
  return {{"study", "fid"},
          {"name", r.name},
          {"extractor", r.extractor},
          {"training_steps", r.training_steps},
          {"medi_wins", r.medi_wins()},
          {"seed_count", r.seeds.size()},
          {"mean_per_class", {{"cls", mean_per_class(r, false)}, {"medi", mean_per_class(r, true)}}},
          {"seeds", seeds}};
}

FidStudyReport fid_report_from_json(const json& j) {
  FidStudyReport r;
  r.name = j.at("name").get<std::string>();
  r.extractor = j.at("extractor").get<std::string>();
  r.training_steps = j.value("training_steps", 0L);
  for (const auto& s : j.at("seeds")) {
    FidSeedResult f;
    f.seed = s.at("seed").get<std::uint64_t>();
    f.cls = {"cls", s.at("cls").at("images").get<long>(), fid_from(s.at("cls").at("fid"))};
    f.medi = {"medi", s.at("medi").at("images").get<long>(), fid_from(s.at("medi").at("fid"))};
    r.seeds.push_back(std::move(f));
  }
  return r;
}

json to_json(const ShiftStudyReport& r) {
  json runs = json::array();
  for (const auto& run : r.runs) {
    json arms = json::object();
    for (const auto& [arm, p] : run.arms)
      arms[arm] = {{"overall", p.overall},
                   {"tss_avg", p.tss_avg},
                   {"per_site", p.per_site},
                   {"single_class_sites", p.single_class_sites}};
    runs.push_back({{"task", run.task},
                    {"run", run.run},
                    {"seed", run.seed},
                    {"train_size", run.train_size},
                    {"test_size", run.test_size},
                    {"arms", arms}});
  }
  json excluded = json::array();
  for (const auto& e : r.excluded)
    excluded.push_back({{"task", e.task}, {"run", e.run}, {"seed", e.seed}, {"reason", e.reason}});
  json aggregates = json::object();
  for (const auto& [task, arms] : r.aggregates)
    for (const auto& [arm, agg] : arms)
      aggregates[task][arm] = {{"overall", mean_se_json(agg.overall)}, {"tss_avg", mean_se_json(agg.tss_avg)}};
  return {{"study", "shift"},   {"name", r.name},     {"extractor", r.extractor}, {"n_per_class", r.n_per_class},
          {"aggregates", aggregates}, {"runs", runs}, {"excluded", excluded}};
}

ShiftStudyReport shift_report_from_json(const json& j) {
  ShiftStudyReport r;
  r.name = j.at("name").get<std::string>();
  r.extractor = j.at("extractor").get<std::string>();
  r.n_per_class = j.at("n_per_class").get<int>();
  for (const auto& run : j.at("runs")) {
    ShiftRunResult s;
    s.task = run.at("task").get<std::string>();
    s.run = run.at("run").get<std::string>();
    s.seed = run.at("seed").get<std::uint64_t>();
    s.train_size = run.at("train_size").get<long>();
    s.test_size = run.at("test_size").get<long>();
    for (const auto& [arm, p] : run.at("arms").items()) {
      eval::ProbeResult pr;
      pr.run_id = s.run;
      pr.overall = p.at("overall").get<double>();
      pr.tss_avg = p.at("tss_avg").get<double>();
      pr.per_site = p.at("per_site").get<std::map<std::string, double>>();
      pr.single_class_sites = p.at("single_class_sites").get<std::vector<std::string>>();
      s.arms[arm] = std::move(pr);
    }
    r.runs.push_back(std::move(s));
  }
  for (const auto& e : j.at("excluded"))
    r.excluded.push_back({e.at("task").get<std::string>(), e.at("run").get<std::string>(),
                          e.at("seed").get<std::uint64_t>(), e.at("reason").get<std::string>()});
  for (const auto& [task, arms] : j.at("aggregates").items())
    for (const auto& [arm, agg] : arms.items())
      r.aggregates[task][arm] = {mean_se_from(agg.at("overall")), mean_se_from(agg.at("tss_avg"))};
  return r;
}

std::string render_fid_svg(const FidStudyReport& r) {
  const auto cls = mean_per_class(r, false), medi = mean_per_class(r, true);
  std::set<std::string> classes;
  for (const auto& [c, v] : cls) classes.insert(c);
  for (const auto& [c, v] : medi) classes.insert(c);
  double top = 1e-9, cls_avg = 0.0, medi_avg = 0.0;
  for (const auto& [c, v] : cls) top = std::max(top, v), cls_avg += v;
  for (const auto& [c, v] : medi) top = std::max(top, v), medi_avg += v;
  if (!cls.empty()) cls_avg /= static_cast<double>(cls.size());
  if (!medi.empty()) medi_avg /= static_cast<double>(medi.size());
  top *= 1.1;

  const int left = 60, bottom = 40, plot_h = 240, group_w = 48, bar_w = 18;
  const int width = left + group_w * static_cast<int>(std::max<std::size_t>(classes.size(), 1)) + 120;
  const int height = plot_h + bottom + 30;
  const auto y_of = [&](double v) { return 20.0 + plot_h * (1.0 - v / top); };
  const char* cls_color = "#d95f02";
  const char* medi_color = "#1b9e77";

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << left << "\" y=\"14\">Per-class FID (" << r.seeds.size() << " seeds, "
      << r.training_steps << " steps)</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << 20 + plot_h << "\" x2=\"" << width - 110 << "\" y2=\"" << 20 + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"20\" x2=\"" << left << "\" y2=\"" << 20 + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = top * i / 4.0;
    svg << "<text x=\"" << left - 6 << "\" y=\"" << fixed(y_of(v) + 4, 1) << "\" text-anchor=\"end\">" << fixed(v, 1)
        << "</text>\n";
  }
  int gi = 0;
  for (const auto& c : classes) {
    const int x0 = left + 6 + gi * group_w;
    for (int k = 0; k < 2; ++k) {
      const auto& m = k == 0 ? cls : medi;
      const auto it = m.find(c);
      if (it == m.end()) continue;
      const double y = y_of(it->second);
      svg << "<rect x=\"" << x0 + k * bar_w << "\" y=\"" << fixed(y, 2) << "\" width=\"" << bar_w - 2
          << "\" height=\"" << fixed(20 + plot_h - y, 2) << "\" fill=\"" << (k == 0 ? cls_color : medi_color)
          << "\"/>\n";
    }
    svg << "<text x=\"" << x0 + bar_w << "\" y=\"" << 20 + plot_h + 14 << "\" text-anchor=\"middle\">" << c
        << "</text>\n";
    ++gi;
  }
  for (int k = 0; k < 2; ++k) {
    const double avg = k == 0 ? cls_avg : medi_avg;
    const char* color = k == 0 ? cls_color : medi_color;
    svg << "<line x1=\"" << left << "\" y1=\"" << fixed(y_of(avg), 2) << "\" x2=\"" << width - 110 << "\" y2=\""
        << fixed(y_of(avg), 2) << "\" stroke=\"" << color << "\" stroke-dasharray=\"4 3\"/>\n";
    svg << "<rect x=\"" << width - 100 << "\" y=\"" << 30 + k * 18 << "\" width=\"10\" height=\"10\" fill=\"" << color
        << "\"/>\n";
    svg << "<text x=\"" << width - 86 << "\" y=\"" << 39 + k * 18 << "\">" << (k == 0 ? "CLS" : "MeDi") << ": "
        << fixed(avg) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_shift_markdown(const ShiftStudyReport& r) {
  std::ostringstream md;
  md << "| Method |";
  for (const auto& [task, arms] : r.aggregates) md << ' ' << task << " Overall | " << task << " TSS AVG |";
  md << "\n|---|";
  for (std::size_t i = 0; i < r.aggregates.size(); ++i) md << "---|---|";
  md << '\n';
  for (const auto& arm : shift_arms()) {
    md << "| " << arm_label(arm) << " |";
    for (const auto& [task, arms] : r.aggregates) {
      const auto it = arms.find(arm);
      if (it == arms.end()) md << " n/a | n/a |";
      else md << ' ' << cell(it->second.overall) << " | " << cell(it->second.tss_avg) << " |";
    }
    md << '\n';
  }
  if (!r.excluded.empty()) {
    md << "\nExcluded runs:\n";
    for (const auto& e : r.excluded)
      md << "- " << e.task << ' ' << e.run << " seed " << e.seed << ": " << e.reason << '\n';
  }
  return md.str();
}

std::string render_shift_tsv(const ShiftStudyReport& r) {
  std::ostringstream t;
  t << "task\tmethod\tmetric\tmean\tse\tn\n";
  for (const auto& [task, arms] : r.aggregates)
    for (const auto& arm : shift_arms()) {
      const auto it = arms.find(arm);
      if (it == arms.end()) continue;
      for (const auto& [metric, m] : {std::pair{"Overall", it->second.overall}, std::pair{"TSS AVG", it->second.tss_avg}})
        t << task << '\t' << arm_label(arm) << '\t' << metric << '\t' << fixed(m.mean, 4) << '\t'
          << (m.se ? fixed(*m.se, 4) : std::string("NA")) << '\t' << m.n << '\n';
    }
  return t.str();
}

std::vector<fs::path> write_fid_report(const FidStudyReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> out{dir / "fid_report.json", dir / "fid_per_class.tsv", dir / "fid_per_class.svg"};
  write_text(out[0], to_json(r).dump(2) + "\n");
  std::ostringstream tsv;
  tsv << "seed\tarm\tclass\tfid\n";
  for (const auto& s : r.seeds)
    for (const auto* a : {&s.cls, &s.medi}) {
      for (const auto& [cls, v] : a->fid.per_class) tsv << s.seed << '\t' << a->arm << '\t' << cls << '\t' << fixed(v, 4) << '\n';
      tsv << s.seed << '\t' << a->arm << "\tMACRO_AVG\t" << fixed(a->fid.macro_average, 4) << '\n';
    }
  write_text(out[1], tsv.str());
  write_text(out[2], render_fid_svg(r));
  return out;
}

std::vector<fs::path> write_shift_report(const ShiftStudyReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> out{dir / "shift_report.json", dir / "shift_table.md", dir / "shift_table.tsv",
                            dir / "shift_runs.tsv"};
  write_text(out[0], to_json(r).dump(2) + "\n");
  write_text(out[1], render_shift_markdown(r));
  write_text(out[2], render_shift_tsv(r));
  std::ostringstream runs;
  runs << "task\trun\tseed\tmethod\toverall\ttss_avg\n";
  for (const auto& run : r.runs)
    for (const auto& arm : shift_arms()) {
      const auto& p = run.arms.at(arm);
      runs << run.task << '\t' << run.run << '\t' << run.seed << '\t' << arm_label(arm) << '\t' << fixed(p.overall, 4)
           << '\t' << fixed(p.tss_avg, 4) << '\n';
    }
  write_text(out[3], runs.str());
  return out;
}

std::vector<fs::path> rerender_reports(const fs::path& dir) {
  std::vector<fs::path> out;
  const auto read = [](const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
  };
  if (fs::exists(dir / "fid_report.json")) {
    auto written = write_fid_report(fid_report_from_json(read(dir / "fid_report.json")), dir);
    out.insert(out.end(), written.begin(), written.end());
  }
  if (fs::exists(dir / "shift_report.json")) {
    auto r = shift_report_from_json(read(dir / "shift_report.json"));
    auto written = write_shift_report(r, dir);
    out.insert(out.end(), written.begin(), written.end());
  }
  if (out.empty()) throw Error("no report JSON found in " + dir.string());
  return out;
}

}  // namespace medi::pipeline
