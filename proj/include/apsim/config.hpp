#pragma once

// JSON patient and therapy files. Absent fields keep their defaults; unknown
// fields are rejected so typos do not silently fall back to defaults.

#include "apsim/firmware.hpp"
#include "apsim/patient.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace apsim {

class ConfigFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TherapyConfig {
    TherapyParams params;
    AlarmThresholds alarms;
};

// Field setters shared by the JSON loaders and scenario overrides. Throw
// ConfigFileError for an unknown key.
void set_patient_field(PatientParams& p, std::string_view key, double value);
void set_therapy_field(TherapyConfig& t, std::string_view key, double value);
std::vector<std::string> patient_fields();
std::vector<std::string> therapy_fields();

PatientParams patient_from_json(const nlohmann::json& j);
TherapyConfig therapy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PatientParams& p);
nlohmann::json to_json(const TherapyConfig& t);

PatientParams load_patient(const std::string& path);
TherapyConfig load_therapy(const std::string& path);

}  // namespace apsim
