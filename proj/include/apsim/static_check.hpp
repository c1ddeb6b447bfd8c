#pragma once

// Development-stage validation of the firmware's alarm and dosing decisions:
// every rule predicate is evaluated at each point of a quantized BG domain.

#include "apsim/firmware.hpp"
#include "apsim/rules.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace apsim {

// BG grid in tenths of mg/dL, inclusive on both ends.
struct StaticDomain {
    std::int64_t lo_deci = -1000;
    std::int64_t hi_deci = 11000;

    std::int64_t size() const { return hi_deci >= lo_deci ? hi_deci - lo_deci + 1 : 0; }
    static double bg_at(std::int64_t deci) { return static_cast<double>(deci) / 10.0; }
};

using DecisionFn = std::function<AlarmOutputs(double bg)>;
using StaticPredicate = std::function<bool(double bg, const AlarmOutputs&)>;

struct StaticRule {
    std::string id;
    std::string description;
    StaticPredicate holds;         // empty for rules that need runtime context
    std::string runtime_context;  // why the rule cannot be decided statically
};

enum class StaticStatus { Valid, Unknown, Timeout };
const char* to_string(StaticStatus s);

struct StaticResult {
    std::string id;
    StaticStatus status = StaticStatus::Valid;
    std::optional<double> counterexample;  // first failing grid point, ascending
    std::string reason;                    // set for undecidable rules
    std::int64_t evaluated = 0;

    bool undecidable() const { return status == StaticStatus::Unknown && !counterexample; }
};

struct StaticReport {
    std::vector<StaticResult> results;
    const StaticResult* find(const std::string& id) const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The four firmware-output rules derived from the alarm thresholds and
// therapy limits.
std::vector<StaticRule> firmware_rules(const AlarmThresholds& thresholds, const TherapyParams& therapy);

// Firmware rules plus one undecidable entry for every rule the coprocessor
// enforces at runtime.
std::vector<StaticRule> static_catalog(const AlarmThresholds& thresholds, const TherapyParams& therapy,
                                       const RuleSet& runtime_rules);

// budget: maximum predicate evaluations per rule before TIMEOUT (0 = unlimited).
// Throws ConfigError on an empty domain.
StaticReport check_static(const std::vector<StaticRule>& rules, const DecisionFn& decide,
                          const StaticDomain& domain = {}, std::int64_t budget = 0);

// Reference decision function and the seeded faults used to exercise the checker.
DecisionFn reference_firmware(const AlarmThresholds& thresholds, const TherapyParams& therapy);
std::vector<std::string> firmware_variants();  // "reference" first
// Throws ConfigError for an unknown name.
DecisionFn firmware_variant(const std::string& name, const AlarmThresholds& thresholds,
                            const TherapyParams& therapy);

std::string format_static_report(const StaticReport& report);

}  // namespace apsim
