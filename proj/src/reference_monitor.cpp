#include "apsim/reference_monitor.hpp"

#include <algorithm>

namespace apsim {

ReferenceMonitor::ReferenceMonitor(const RuleSet& rules) : basal_period_min_(rules.config.basal_period_min)
{
    for (const auto& r : rules.rules) {
        if (const auto* io = std::get_if<IoAccessRule>(&r)) {
            budgets_.push_back({io->device, io->allowed_states, io->max_per_entry.value_or(0), io->max_count,
                                io->window, io->on_violation == Decision::Block, {}});
        } else if (const auto* p = std::get_if<PhysiologicalRule>(&r)) {
            if (p->kind == PhysioKind::MaxBolus) {
                max_bolus_ = p->limit;
            } else if (p->kind == PhysioKind::MinBolusInterval) {
                min_interval_ = from_minutes(p->limit);
            } else if (p->kind == PhysioKind::MaxBasalRate) {
                max_basal_ = p->limit;
            }
        }
    }
}

void ReferenceMonitor::observe_transition(ProgramState from, ProgramState to, SimTime)
{
    (void)from;
    before_infuse_ = state_;
    state_ = to;
    pump_in_entry_ = 0;
    rf_in_entry_ = 0;
}

void ReferenceMonitor::observe_bg(double) { have_bg_ = true; }

void ReferenceMonitor::observe_access(Device device, SimTime now)
{
    ++(device == Device::Pump ? pump_in_entry_ : rf_in_entry_);
    for (auto& b : budgets_) {
        if (b.device == device) {
            b.seen.push_back(now);
        }
    }
}

void ReferenceMonitor::observe_reset(SimTime)
{
    state_ = ProgramState::Idle;
    before_infuse_ = ProgramState::Idle;
    pump_in_entry_ = 0;
    rf_in_entry_ = 0;
}

Decision ReferenceMonitor::classify(const ActuatorCmdMsg& cmd, SimTime now)
{
    int& in_entry = cmd.device == Device::Pump ? pump_in_entry_ : rf_in_entry_;
    const int earlier_in_entry = in_entry++;

    bool blocked = false;
    for (auto& b : budgets_) {
        if (b.device != cmd.device) {
            continue;
        }
        b.seen.push_back(now);
        const auto recent = std::count_if(b.seen.begin(), b.seen.end(), [&](SimTime t) { return now - t < b.window; });
        const bool state_ok = std::find(b.states.begin(), b.states.end(), state_) != b.states.end();
        const bool entry_ok = b.per_entry == 0 || earlier_in_entry < b.per_entry;
        const bool rate_ok = b.max_count == 0 || recent <= b.max_count;
        if (b.blocks && !(state_ok && entry_ok && rate_ok)) {
            blocked = true;
        }
    }
    if (blocked) {
        return Decision::Block;
    }
    if (cmd.device != Device::Pump) {
        return Decision::Allow;
    }
    if (!have_bg_) {
        return Decision::Block;
    }

    const bool known = state_ == ProgramState::InfuseInsulin &&
                       (before_infuse_ == ProgramState::ComputeBasal || before_infuse_ == ProgramState::ComputeBolus);
    const bool bolus_limits = !known || before_infuse_ == ProgramState::ComputeBolus;
    const bool basal_limits = !known || before_infuse_ == ProgramState::ComputeBasal;
    const double units = cmd.amount / 10.0;

    if (bolus_limits) {
        if (max_bolus_ && units > *max_bolus_ + 1e-9) {
            return Decision::Block;
        }
        if (min_interval_ && !boluses_.empty() && now - boluses_.back() < *min_interval_) {
            return Decision::Block;
        }
    }
    if (basal_limits && max_basal_ && units / basal_period_min_ * 60.0 > *max_basal_ + 1e-9) {
        return Decision::Block;
    }

    const bool is_bolus = known ? before_infuse_ == ProgramState::ComputeBolus : cmd.mode == InfusionMode::Bolus;
    if (is_bolus) {
        boluses_.push_back(now);
    }
    return Decision::Allow;
}

}  // namespace apsim
