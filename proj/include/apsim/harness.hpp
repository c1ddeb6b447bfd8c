#pragma once

// Closed-loop testbed: patient, CGM, firmware, IMC links, coprocessor and
// pump wired together on one discrete-event simulator, driven by a script.

#include "apsim/config.hpp"
#include "apsim/coprocessor.hpp"
#include "apsim/firmware.hpp"
#include "apsim/imc.hpp"
#include "apsim/patient.hpp"
#include "apsim/rules.hpp"
#include "apsim/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace apsim {

struct RunOptions {
    PatientParams patient;
    TherapyConfig therapy;
    RuleSet rules = default_rules();
    FrameLengths frames;
    std::int64_t baud = 9600;
    int bits_per_byte = 10;
    SimDuration patient_step = minutes_ms(1);
    SimDuration cgm_period = minutes_ms(10);
    bool record_events = true;
};

struct TracePoint {
    SimTime at{};
    double bg = 0.0;         // true plasma glucose
    double cgm = 0.0;        // reading handed to the firmware
    double insulin_u = 0.0;  // pump insulin delivered since the previous point
};

struct Actuation {
    SimTime at{};
    ActuatorCmdMsg command;
    double units = 0.0;
};

struct FirmwareCommand {
    SimTime sent_at{};
    std::uint16_t seq = 0;
    DoseKind kind = DoseKind::Basal;
    double units = 0.0;
    bool redirected = false;
};

struct CrossCheck {
    SimTime at{};
    std::uint16_t seq = 0;
    Decision coprocessor = Decision::Allow;
    Decision reference = Decision::Allow;
};

struct Counters {
    int allowed = 0;
    int blocked = 0;
    int warned = 0;
    int resets = 0;
};

struct ScenarioReport {
    std::string name;
    std::uint64_t seed = 0;
    SimTime warmup_end{};
    SimTime end{};

    std::vector<Verdict> verdicts;
    std::vector<AlarmEntry> alarms;
    Counters counters;

    std::vector<TracePoint> bg_trace;
    std::vector<BgObservation> coprocessor_bg;
    std::vector<SimTime> heartbeats_received;
    std::vector<FirmwareCommand> firmware_commands;
    std::vector<Actuation> actuations;
    std::vector<CrossCheck> cross_checks;
    std::vector<FirmwareLogEntry> firmware_log;

    double insulin_delivered_u = 0.0;   // through the pump, all sources
    double emergency_insulin_u = 0.0;   // coprocessor emergency basal
    double carbs_ingested_g = 0.0;
    double min_bg = 0.0;
    double max_bg = 0.0;
    int negative_compartments = 0;      // patient steps that produced a negative or non-finite value

    std::vector<std::string> event_log;

    int cross_check_mismatches() const;
    // Insulin that reached the patient from firmware commands with the given seq.
    double delivered_for(std::uint16_t seq) const;
};

// Applies the script's overrides to `base`, validates everything, then runs.
// Throws ScriptError / ConfigFileError / RuleError before simulating on bad input.
ScenarioReport run_scenario(const ScenarioScript& script, std::uint64_t seed, const RunOptions& base = {});

// Options with the script's patient/therapy overrides applied.
RunOptions apply_overrides(const ScenarioScript& script, const RunOptions& base);

Counters tally(const std::vector<Verdict>& verdicts);

}  // namespace apsim
