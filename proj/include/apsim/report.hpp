#pragma once

// Text renderings of a scenario report: the decoded verdict log, the BG trace
// CSV and a JSON summary.

#include "apsim/harness.hpp"

#include <filesystem>
#include <string>

#include <json.hpp>

namespace apsim {

// One "timestamp_ms,rule_id,decision,detail" line per verdict.
std::string verdict_log(const ScenarioReport& r);
// "time_min,bg_mg_dl,insulin_u" per CGM sample.
std::string bg_trace_csv(const ScenarioReport& r);
nlohmann::json report_json(const ScenarioReport& r);

// Writes verdicts.log, bg_trace.csv and report.json into dir (created if needed).
void write_report_files(const ScenarioReport& r, const std::filesystem::path& dir);

}  // namespace apsim
