#pragma once

#include "medi/pipeline/studies.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace medi::pipeline {

nlohmann::json to_json(const FidStudyReport& r);
FidStudyReport fid_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ShiftStudyReport& r);
ShiftStudyReport shift_report_from_json(const nlohmann::json& j);

// Per-class FID bars for both arms (mean over seeds) with dotted lines at
// each arm's average.
std::string render_fid_svg(const FidStudyReport& r);

// Rows {No syn. data, CLS only, MeDi}, columns {Overall, TSS AVG} per task,
// cells "mean ± SE".
std::string render_shift_markdown(const ShiftStudyReport& r);
std::string render_shift_tsv(const ShiftStudyReport& r);

// Each returns the files written.
std::vector<std::filesystem::path> write_fid_report(const FidStudyReport& r, const std::filesystem::path& dir);
std::vector<std::filesystem::path> write_shift_report(const ShiftStudyReport& r, const std::filesystem::path& dir);

// Re-renders every report JSON found in dir.
std::vector<std::filesystem::path> rerender_reports(const std::filesystem::path& dir);

}  // namespace medi::pipeline
