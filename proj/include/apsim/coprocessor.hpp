#pragma once

// Safety coprocessor: tracks the firmware's reported program state, snoops
// sensor traffic, intercepts actuator commands and runs the time-triggered
// rules and the heartbeat watchdog.

#include "apsim/imc.hpp"
#include "apsim/rules.hpp"
#include "apsim/sim_core.hpp"

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace apsim {

struct Verdict {
    SimTime at{};
    std::string rule_id;
    RuleCategory category = RuleCategory::Protocol;
    Decision decision = Decision::Allow;
    std::string detail;
    std::string trigger;                    // description of the observed event
    std::optional<ActuatorCmdMsg> command;  // set for actuator verdicts
    ProgramState tracked_state = ProgramState::Idle;
};

struct AlarmEntry {
    SimTime at{};
    std::string rule_id;
    Decision decision = Decision::Warn;
    std::string detail;
};

struct ForwardCommand {
    ActuatorCmdMsg command;
    SimTime at{};
};
struct NotifyBlocked {
    std::uint16_t seq = 0;
};
struct RaiseAlarm {
    AlarmEntry alarm;
};
struct ResetMain {};
struct StartEmergencyBasal {
    double u_per_h = 0.0;
};
using Action = std::variant<ForwardCommand, NotifyBlocked, RaiseAlarm, ResetMain, StartEmergencyBasal>;

struct BgObservation {
    SimTime at{};
    double bg = 0.0;
};

// Insulin the coprocessor let through, as it understood it.
struct AllowedDose {
    SimTime at{};
    InfusionMode mode = InfusionMode::Basal;
    double units = 0.0;
    std::uint16_t seq = 0;
};

inline constexpr const char* kProtocolRuleId = "imc-protocol";
inline constexpr const char* kPhysioContextRuleId = "physio-context";

class Coprocessor {
public:
    explicit Coprocessor(RuleSet rules, SimTime start = SimTime{});
    Coprocessor(const Coprocessor&) = delete;
    Coprocessor& operator=(const Coprocessor&) = delete;
    Coprocessor(Coprocessor&&) = default;

    // Returns the verdicts that need follow-up: every actuator ALLOW/BLOCK and
    // any WARN or RESET_MAIN. Legal observations produce nothing.
    std::vector<Verdict> on_imc_message(const ImcMessage& msg, SimTime now);
    // Decodes a raw frame first; undecodable frames yield a protocol WARN.
    std::vector<Verdict> on_frame(const Frame& frame, SimTime now);

    // ALLOW for a legal, consistent report; WARN otherwise. Tracking follows
    // the reported target either way.
    Verdict check_state_transition(ProgramState from, ProgramState to, SimTime now);

    // Watchdog, dwell limits and expiry of pending time-triggered checks.
    std::vector<Verdict> tick(SimTime now);
    // The main controller was restarted and is back in IDLE.
    void main_reset(SimTime now);
    // Earliest instant at which tick() would produce a verdict.
    std::optional<SimTime> next_deadline() const;

    // ALLOW forwards commands; other decisions go through follow_up.
    std::vector<Action> dispatch(const Verdict& v) const;
    // Throws std::invalid_argument for an ALLOW verdict.
    std::vector<Action> follow_up(const Verdict& v) const;

    ProgramState tracked_state() const { return tracked_; }
    std::optional<double> bg_cache() const;
    const std::vector<BgObservation>& bg_samples() const { return bg_samples_; }
    const std::vector<Verdict>& verdicts() const { return log_; }
    const std::vector<AlarmEntry>& alarms() const { return alarms_; }
    const std::vector<AllowedDose>& allowed_doses() const { return doses_; }
    SimTime last_heartbeat() const { return last_heartbeat_; }
    bool emergency_basal_active() const { return emergency_; }
    const RuleSet& rules() const { return rules_; }

private:
    struct ExpectRise {
        const TimeTriggeredRule* rule;
        SimTime start;
        double bg_at_infusion;
        bool warning = false;
        double last_bg = 0.0;
    };

    std::vector<Verdict> on_actuator(const ActuatorCmdMsg& cmd, SimTime now);
    std::vector<Verdict> on_snoop(const SensorSnoopMsg& snoop, SimTime now);
    std::vector<Verdict> on_transition(ProgramState from, ProgramState to, SimTime now);
    std::vector<Verdict> check_physio_bg_level(double bg, SimTime now);
    // Budget checks shared by pump commands and RF accesses; returns a
    // violation verdict or nothing.
    std::optional<Verdict> check_io_access(Device device, SimTime now, const std::string& trigger);
    std::optional<Verdict> check_physio_infusion(const ActuatorCmdMsg& cmd, SimTime now);

    Verdict make(SimTime at, const std::string& rule_id, RuleCategory cat, Decision d, std::string detail,
                 std::string trigger) const;
    void record(const Verdict& v);

    RuleSet rules_;
    std::vector<const IoAccessRule*> io_rules_;
    std::vector<const StateTransitionRule*> transition_rules_;
    std::vector<const PhysiologicalRule*> physio_rules_;
    std::vector<const TimeTriggeredRule*> timed_rules_;

    ProgramState tracked_ = ProgramState::Idle;
    SimTime entered_at_{};
    bool dwell_warned_ = false;
    std::optional<ProgramState> infuse_context_;
    std::map<Device, int> entry_accesses_;
    std::map<std::string, std::deque<SimTime>> access_times_;  // per io rule
    std::map<ProgramState, std::deque<SimTime>> entry_times_;

    std::vector<BgObservation> bg_samples_;
    std::vector<AllowedDose> doses_;
    std::optional<SimTime> last_bolus_;
    std::vector<ExpectRise> expect_rise_;

    SimTime last_heartbeat_{};
    bool emergency_ = false;

    std::vector<Verdict> log_;
    std::vector<AlarmEntry> alarms_;
};

}  // namespace apsim
