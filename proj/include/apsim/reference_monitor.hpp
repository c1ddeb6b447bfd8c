#pragma once

// A second, deliberately simple implementation of the actuator-blocking
// rules, used to cross-check the coprocessor's ALLOW/BLOCK decisions.
// It only understands the rule kinds that can block a pump command.

#include "apsim/imc.hpp"
#include "apsim/rules.hpp"

#include <optional>
#include <vector>

namespace apsim {

class ReferenceMonitor {
public:
    explicit ReferenceMonitor(const RuleSet& rules);

    void observe_transition(ProgramState from, ProgramState to, SimTime now);
    void observe_bg(double bg);
    // A passive access seen on the sensor bus; it consumes the same budgets.
    void observe_access(Device device, SimTime now);
    void observe_reset(SimTime now);

    // ALLOW or BLOCK for the command, updating the monitor's history.
    Decision classify(const ActuatorCmdMsg& cmd, SimTime now);

private:
    struct Budget {
        Device device;
        std::vector<ProgramState> states;
        int per_entry;  // 0 = unlimited
        int max_count;  // 0 = unlimited
        SimDuration window;
        bool blocks;
        std::vector<SimTime> seen;
    };

    std::vector<Budget> budgets_;
    std::optional<double> max_bolus_;
    std::optional<SimDuration> min_interval_;
    std::optional<double> max_basal_;
    double basal_period_min_;

    ProgramState state_ = ProgramState::Idle;
    ProgramState before_infuse_ = ProgramState::Idle;
    int pump_in_entry_ = 0;
    int rf_in_entry_ = 0;
    bool have_bg_ = false;
    std::vector<SimTime> boluses_;
};

}  // namespace apsim
