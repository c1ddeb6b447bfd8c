#pragma once

// Scenario scripts: a timeline of user, attacker and fault actions applied to
// the simulated device after a warm-up period.
//
// Script format, one directive per line ('#' starts a comment):
//   name S1
//   description free text
//   duration_min 120
//   warmup_min 60
//   set patient.<field> <value>
//   set therapy.<field> <value>
//   at <min> rf_packet kind=bolus_request|param_update|exploit [carbs=] [units=]
//                      [payload_len=] [target=] [param=] [value=]
//   at <min> meal grams=<g>
//   at <min> disable_firmware
//   at <min> enable_firmware
//   at <min> imc_frame hex=<bytes>
// Times are minutes after warm-up and may be fractional.

#include "apsim/firmware.hpp"
#include "apsim/imc.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace apsim {

struct Meal {
    double grams = 0.0;
};
struct DisableFirmware {};
struct EnableFirmware {};
// Raw bytes pushed onto the main-to-coprocessor link, bypassing the firmware.
struct InjectFrame {
    Frame bytes;
};

using ScriptActionKind = std::variant<RfPacket, Meal, DisableFirmware, EnableFirmware, InjectFrame>;

struct ScriptAction {
    double at_min = 0.0;
    ScriptActionKind action;
};

struct ScenarioScript {
    std::string name;
    std::string description;
    double duration_min = 0.0;
    double warmup_min = 60.0;
    std::vector<std::pair<std::string, double>> patient_overrides;
    std::vector<std::pair<std::string, double>> therapy_overrides;
    std::vector<ScriptAction> actions;

    // Throws ScriptError when an action falls outside [0, duration].
    void validate() const;
};

class ScriptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

ScenarioScript parse_script(std::string_view text);
ScenarioScript load_script(const std::string& path);
std::string describe(const ScriptActionKind& a);

// The five case studies, parsed from the scripts under scenarios/.
const std::vector<ScenarioScript>& builtin_scenarios();
// Throws ScriptError listing the available names when `name` is unknown.
const ScenarioScript& builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

}  // namespace apsim
