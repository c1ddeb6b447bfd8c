#include "apsim/config.hpp"

#include <cmath>
#include <fstream>
#include <utility>

#include <fmt/format.h>

namespace apsim {

namespace {

using nlohmann::json;

const std::pair<const char*, double PatientParams::*> kPatientFields[] = {
    {"body_weight_kg", &PatientParams::body_weight_kg},
    {"egp_mg_per_kg_min", &PatientParams::egp_mg_per_kg_min},
    {"glucose_volume_dl_per_kg", &PatientParams::glucose_volume_dl_per_kg},
    {"insulin_volume_l_per_kg", &PatientParams::insulin_volume_l_per_kg},
    {"carb_absorption_per_min", &PatientParams::carb_absorption_per_min},
    {"insulin_clearance_per_min", &PatientParams::insulin_clearance_per_min},
    {"sc_absorption_per_min", &PatientParams::sc_absorption_per_min},
    {"carb_bioavailability", &PatientParams::carb_bioavailability},
    {"equilibrium_bg", &PatientParams::equilibrium_bg},
    {"basal_u_per_h", &PatientParams::basal_u_per_h},
    {"noise_sd", &PatientParams::noise_sd},
};

const std::pair<const char*, double TherapyParams::*> kTherapyFields[] = {
    {"carb_ratio", &TherapyParams::carb_ratio},
    {"correction_factor", &TherapyParams::correction_factor},
    {"target_bg", &TherapyParams::target_bg},
    {"dia_min", &TherapyParams::dia_min},
    {"max_bolus", &TherapyParams::max_bolus},
    {"basal_rate", &TherapyParams::basal_rate},
    {"max_basal_rate", &TherapyParams::max_basal_rate},
    {"basal_gain", &TherapyParams::basal_gain},
    {"basal_period_min", &TherapyParams::basal_period_min},
};

const char* const kTherapyIntegerFields[] = {"amount_max", "param_buffer_len", "heartbeat_period_ms"};
const char* const kAlarmFields[] = {"critical_lo_bg", "critical_hi_bg"};

std::int64_t as_integer(std::string_view key, double value)
{
    if (!std::isfinite(value) || value != std::floor(value) || value < 0 || value > 1e12) {
        throw ConfigFileError(fmt::format("{} must be a non-negative integer", key));
    }
    return static_cast<std::int64_t>(value);
}

double number_field(const json& j, const std::string& key)
{
    if (!j.is_number()) {
        throw ConfigFileError(fmt::format("'{}' must be a number", key));
    }
    return j.get<double>();
}

json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigFileError("cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigFileError(fmt::format("{}: {}", path, e.what()));
    }
}

}  // namespace

void set_patient_field(PatientParams& p, std::string_view key, double value)
{
    for (const auto& [name, member] : kPatientFields) {
        if (key == name) {
            p.*member = value;
            return;
        }
    }
    throw ConfigFileError(fmt::format("unknown patient field '{}'", key));
}

void set_therapy_field(TherapyConfig& t, std::string_view key, double value)
{
    for (const auto& [name, member] : kTherapyFields) {
        if (key == name) {
            t.params.*member = value;
            return;
        }
    }
    if (key == "amount_max") {
        t.params.amount_max = static_cast<int>(std::min<std::int64_t>(as_integer(key, value), 1 << 20));
    } else if (key == "param_buffer_len") {
        t.params.param_buffer_len = static_cast<std::size_t>(as_integer(key, value));
    } else if (key == "heartbeat_period_ms") {
        t.params.heartbeat_period = SimDuration{as_integer(key, value)};
    } else if (key == "critical_lo_bg") {
        t.alarms.critical_lo = value;
    } else if (key == "critical_hi_bg") {
        t.alarms.critical_hi = value;
    } else {
        throw ConfigFileError(fmt::format("unknown therapy field '{}'", key));
    }
}

std::vector<std::string> patient_fields()
{
    std::vector<std::string> out;
    for (const auto& f : kPatientFields) {
        out.emplace_back(f.first);
    }
    return out;
}

std::vector<std::string> therapy_fields()
{
    std::vector<std::string> out;
    for (const auto& f : kTherapyFields) {
        out.emplace_back(f.first);
    }
    for (const char* f : kTherapyIntegerFields) {
        out.emplace_back(f);
    }
    for (const char* f : kAlarmFields) {
        out.emplace_back(f);
    }
    return out;
}

PatientParams patient_from_json(const json& j)
{
    if (!j.is_object()) {
        throw ConfigFileError("patient config must be a JSON object");
    }
    PatientParams p;
    for (const auto& [key, value] : j.items()) {
        set_patient_field(p, key, number_field(value, key));
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigFileError(e.what());
    }
    return p;
}

TherapyConfig therapy_from_json(const json& j)
{
    if (!j.is_object()) {
        throw ConfigFileError("therapy config must be a JSON object");
    }
    TherapyConfig t;
    for (const auto& [key, value] : j.items()) {
        set_therapy_field(t, key, number_field(value, key));
    }
    try {
        t.params.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigFileError(e.what());
    }
    if (!(t.alarms.critical_lo < t.alarms.critical_hi)) {
        throw ConfigFileError("critical_lo_bg must be below critical_hi_bg");
    }
    return t;
}

json to_json(const PatientParams& p)
{
    json j = json::object();
    for (const auto& [name, member] : kPatientFields) {
        j[name] = p.*member;
    }
    return j;
}

json to_json(const TherapyConfig& t)
{
    json j = json::object();
    for (const auto& [name, member] : kTherapyFields) {
        j[name] = t.params.*member;
    }
    j["amount_max"] = t.params.amount_max;
    j["param_buffer_len"] = t.params.param_buffer_len;
    j["heartbeat_period_ms"] = t.params.heartbeat_period.count();
    j["critical_lo_bg"] = t.alarms.critical_lo;
    j["critical_hi_bg"] = t.alarms.critical_hi;
    return j;
}

PatientParams load_patient(const std::string& path) { return patient_from_json(read_json(path)); }

TherapyConfig load_therapy(const std::string& path) { return therapy_from_json(read_json(path)); }

}  // namespace apsim
