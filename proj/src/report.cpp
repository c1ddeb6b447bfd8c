#include "apsim/report.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

namespace apsim {

namespace {

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

}  // namespace

std::string verdict_log(const ScenarioReport& r)
{
    std::string out;
    for (const auto& v : r.verdicts) {
        out += fmt::format("{},{},{},{}\n", ticks(v.at), v.rule_id, to_string(v.decision), csv_field(v.detail));
    }
    return out;
}

std::string bg_trace_csv(const ScenarioReport& r)
{
    std::string out = "time_min,bg_mg_dl,insulin_u\n";
    for (const auto& p : r.bg_trace) {
        out += fmt::format("{:g},{:.2f},{:.2f}\n", to_minutes(p.at), p.bg, p.insulin_u);
    }
    return out;
}

nlohmann::json report_json(const ScenarioReport& r)
{
    using nlohmann::json;
    json j;
    j["scenario"] = r.name;
    j["seed"] = r.seed;
    j["warmup_end_ms"] = ticks(r.warmup_end);
    j["end_ms"] = ticks(r.end);
    j["counters"] = {{"allowed", r.counters.allowed},
                     {"blocked", r.counters.blocked},
                     {"warned", r.counters.warned},
                     {"resets", r.counters.resets}};
    j["insulin_delivered_u"] = std::round(r.insulin_delivered_u * 1000.0) / 1000.0;
    j["emergency_insulin_u"] = std::round(r.emergency_insulin_u * 1000.0) / 1000.0;
    j["carbs_ingested_g"] = r.carbs_ingested_g;
    j["bg_min_mg_dl"] = std::round(r.min_bg * 100.0) / 100.0;
    j["bg_max_mg_dl"] = std::round(r.max_bg * 100.0) / 100.0;
    j["cross_check_mismatches"] = r.cross_check_mismatches();

    json alarms = json::array();
    for (const auto& a : r.alarms) {
        alarms.push_back({{"at_ms", ticks(a.at)}, {"rule_id", a.rule_id}, {"decision", to_string(a.decision)},
                          {"detail", a.detail}});
    }
    j["alarms"] = alarms;

    json commands = json::array();
    for (const auto& c : r.firmware_commands) {
        commands.push_back({{"sent_ms", ticks(c.sent_at)},
                            {"seq", c.seq},
                            {"kind", to_string(c.kind)},
                            {"units", std::round(c.units * 10.0) / 10.0},
                            {"redirected", c.redirected},
                            {"delivered_u", std::round(r.delivered_for(c.seq) * 10.0) / 10.0}});
    }
    j["firmware_commands"] = commands;
    return j;
}

void write_report_files(const ScenarioReport& r, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_file(dir / "verdicts.log", verdict_log(r));
    write_file(dir / "bg_trace.csv", bg_trace_csv(r));
    write_file(dir / "report.json", report_json(r).dump(2) + "\n");
}

}  // namespace apsim
