#pragma once

// Safety rules enforced by the coprocessor and their keyed-text file format.

#include "apsim/imc.hpp"
#include "apsim/sim_core.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace apsim {

enum class Decision { Allow, Block, Warn, ResetMain };
const char* to_string(Decision d);
std::optional<Decision> parse_decision(std::string_view s);

enum class RuleCategory { IoAccess, StateTransition, Physiological, TimeTriggered, Protocol };
const char* to_string(RuleCategory c);

struct IoAccessRule {
    std::string id;
    Device device = Device::Pump;
    std::vector<ProgramState> allowed_states;
    std::optional<int> max_per_entry;  // accesses allowed per entry into an allowed state
    int max_count = 0;                 // accesses allowed within `window`, 0 = unlimited
    SimDuration window = minutes_ms(60);
    Decision on_violation = Decision::Block;
};

struct Edge {
    std::optional<ProgramState> from;  // empty = any state
    ProgramState to;
    bool operator==(const Edge&) const = default;
};

struct StateTransitionRule {
    std::string id;
    std::vector<Edge> edges;
    std::map<ProgramState, SimDuration> max_dwell;
    int max_entries = 0;  // per non-IDLE state within `window`, 0 = unlimited
    SimDuration window = minutes_ms(60);

    bool legal(ProgramState from, ProgramState to) const;
};

enum class PhysioKind { MinBolusInterval, MaxBolus, MaxBasalRate, BgRange, BgRate };
const char* to_string(PhysioKind k);

struct PhysiologicalRule {
    std::string id;
    PhysioKind kind = PhysioKind::MaxBolus;
    double limit = 0.0;  // minutes, U, U/h or mg/dL/min depending on kind
    double lo = 0.0;     // BgRange only
    double hi = 0.0;
};

enum class TimedKind { ExpectBgRiseAfterBolus, WarnBgRiseNoBolus, HeartbeatTimeout };
const char* to_string(TimedKind k);

struct TimeTriggeredRule {
    std::string id;
    TimedKind kind = TimedKind::HeartbeatTimeout;
    double threshold = 0.0;  // mg/dL drop or rise
    double window_min = 0.0;
    int units = 0;  // heartbeat periods
};

using SafetyRule = std::variant<IoAccessRule, StateTransitionRule, PhysiologicalRule, TimeTriggeredRule>;

const std::string& rule_id(const SafetyRule& r);
RuleCategory rule_category(const SafetyRule& r);

struct CoprocessorConfig {
    SimDuration heartbeat_period = minutes_ms(1);
    double basal_period_min = 10.0;  // turns a basal command amount into a rate
    SimDuration processing = SimDuration{3};
    SimDuration tick_period = minutes_ms(1);
    bool reset_on_timeout = true;
    double emergency_basal_u_per_h = 0.0;  // 0 disables
};

struct RuleSet {
    std::vector<SafetyRule> rules;
    CoprocessorConfig config;

    // Throws RuleError on duplicate ids or non-positive thresholds.
    void validate() const;
    std::vector<std::string> ids() const;
    const SafetyRule* find(std::string_view id) const;
    // Copy without the named rule.
    RuleSet without(std::string_view id) const;
};

class RuleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

RuleSet default_rules();

// One directive per line:
//   config key=value
//   rule id=<id> category=<io_access|state_transition|physiological|time_triggered> key=value...
// '#' starts a comment. Throws RuleError with the line number on bad input.
RuleSet parse_rules(std::string_view text);
RuleSet load_rules(const std::string& path);
std::string format_rules(const RuleSet& set);

}  // namespace apsim
