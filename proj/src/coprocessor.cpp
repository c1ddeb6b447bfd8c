#include "apsim/coprocessor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace apsim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void prune(std::deque<SimTime>& times, SimTime now, SimDuration window)
{
    while (!times.empty() && now - times.front() >= window) {
        times.pop_front();
    }
}

std::string state_list(const std::vector<ProgramState>& states)
{
    std::string out;
    for (auto s : states) {
        out += (out.empty() ? "" : "|") + std::string(to_string(s));
    }
    return out;
}

}  // namespace

Coprocessor::Coprocessor(RuleSet rules, SimTime start)
    : rules_(std::move(rules)), entered_at_(start), last_heartbeat_(start)
{
    rules_.validate();
    for (const auto& r : rules_.rules) {
        std::visit(overloaded{
                       [&](const IoAccessRule& x) { io_rules_.push_back(&x); },
                       [&](const StateTransitionRule& x) { transition_rules_.push_back(&x); },
                       [&](const PhysiologicalRule& x) { physio_rules_.push_back(&x); },
                       [&](const TimeTriggeredRule& x) { timed_rules_.push_back(&x); },
                   },
                   r);
    }
}

std::optional<double> Coprocessor::bg_cache() const
{
    if (bg_samples_.empty()) {
        return std::nullopt;
    }
    return bg_samples_.back().bg;
}

Verdict Coprocessor::make(SimTime at, const std::string& rule_id, RuleCategory cat, Decision d, std::string detail,
                          std::string trigger) const
{
    Verdict v;
    v.at = at;
    v.rule_id = rule_id;
    v.category = cat;
    v.decision = d;
    v.detail = std::move(detail);
    v.trigger = std::move(trigger);
    v.tracked_state = tracked_;
    return v;
}

void Coprocessor::record(const Verdict& v)
{
    log_.push_back(v);
    if (v.decision != Decision::Allow) {
        alarms_.push_back({v.at, v.rule_id, v.decision, v.detail});
    }
}

std::vector<Verdict> Coprocessor::on_frame(const Frame& frame, SimTime now)
{
    const DecodeResult r = decode(frame);
    if (!r.payload) {
        Verdict v = make(now, kProtocolRuleId, RuleCategory::Protocol, Decision::Warn,
                         fmt::format("{} (kind byte 0x{:02x})", to_string(r.error), r.kind_byte), "IMC frame");
        record(v);
        return {v};
    }
    return on_imc_message(ImcMessage{*r.payload, frame.size(), now}, now);
}

std::vector<Verdict> Coprocessor::on_imc_message(const ImcMessage& msg, SimTime now)
{
    return std::visit(overloaded{
                          [&](const StateTransitionMsg& m) { return on_transition(m.from, m.to, now); },
                          [&](const ActuatorCmdMsg& m) { return on_actuator(m, now); },
                          [&](const HeartbeatMsg&) {
                              last_heartbeat_ = now;
                              emergency_ = false;
                              return std::vector<Verdict>{};
                          },
                          [&](const SensorSnoopMsg& m) { return on_snoop(m, now); },
                          [&](const BlockNoticeMsg& m) {
                              Verdict v = make(now, kProtocolRuleId, RuleCategory::Protocol, Decision::Warn,
                                               "block notice received from the main controller", describe(m));
                              record(v);
                              return std::vector<Verdict>{v};
                          },
                      },
                      msg.payload);
}

Verdict Coprocessor::check_state_transition(ProgramState from, ProgramState to, SimTime now)
{
    const ProgramState tracked = tracked_;
    const std::string trigger = fmt::format("STATE_TRANSITION {}->{}", to_string(from), to_string(to));
    Verdict v = make(now, transition_rules_.empty() ? std::string("state-transition") : transition_rules_.front()->id,
                     RuleCategory::StateTransition, Decision::Allow, "legal transition", trigger);
    for (const auto* rule : transition_rules_) {
        v.rule_id = rule->id;
        if (from != tracked) {
            v.decision = Decision::Warn;
            v.detail = fmt::format("reported {}->{} but tracked state is {}", to_string(from), to_string(to),
                                   to_string(tracked));
            break;
        }
        if (!rule->legal(from, to)) {
            v.decision = Decision::Warn;
            v.detail = fmt::format("illegal transition {}->{}", to_string(from), to_string(to));
            break;
        }
    }

    if (to == ProgramState::InfuseInsulin) {
        infuse_context_ = tracked;
    } else if (to != tracked) {
        infuse_context_.reset();
    }
    tracked_ = to;
    entered_at_ = now;
    dwell_warned_ = false;
    entry_accesses_.clear();
    return v;
}

std::vector<Verdict> Coprocessor::on_transition(ProgramState from, ProgramState to, SimTime now)
{
    std::vector<Verdict> out;
    Verdict v = check_state_transition(from, to, now);
    if (v.decision != Decision::Allow) {
        record(v);
        out.push_back(v);
    }
    if (to == ProgramState::Idle) {
        return out;
    }
    auto& entries = entry_times_[to];
    for (const auto* rule : transition_rules_) {
        if (rule->max_entries <= 0) {
            continue;
        }
        prune(entries, now, rule->window);
        if (static_cast<int>(entries.size()) + 1 > rule->max_entries) {
            Verdict f = make(now, rule->id, RuleCategory::StateTransition, Decision::Warn,
                             fmt::format("{} entered more than {} times in {:g} min", to_string(to),
                                         rule->max_entries, to_minutes(rule->window)),
                             v.trigger);
            record(f);
            out.push_back(f);
        }
    }
    entries.push_back(now);
    return out;
}

std::optional<Verdict> Coprocessor::check_io_access(Device device, SimTime now, const std::string& trigger)
{
    const int in_entry = entry_accesses_[device]++;
    std::optional<Verdict> worst;
    for (const auto* rule : io_rules_) {
        if (rule->device != device) {
            continue;
        }
        auto& times = access_times_[rule->id];
        prune(times, now, rule->window);
        times.push_back(now);

        std::string why;
        const auto& allowed = rule->allowed_states;
        if (std::find(allowed.begin(), allowed.end(), tracked_) == allowed.end()) {
            why = fmt::format("{} accessed from {} (allowed: {})", to_string(device), to_string(tracked_),
                              state_list(allowed));
        } else if (rule->max_per_entry && in_entry >= *rule->max_per_entry) {
            why = fmt::format("{} accessed {} times in one {} entry (limit {})", to_string(device), in_entry + 1,
                              to_string(tracked_), *rule->max_per_entry);
        } else if (rule->max_count > 0 && static_cast<int>(times.size()) > rule->max_count) {
            why = fmt::format("{} accessed {} times in {:g} min (limit {})", to_string(device), times.size(),
                              to_minutes(rule->window), rule->max_count);
        }
        if (why.empty()) {
            continue;
        }
        Verdict v = make(now, rule->id, RuleCategory::IoAccess, rule->on_violation, why, trigger);
        if (!worst || (worst->decision == Decision::Warn && v.decision == Decision::Block)) {
            worst = v;
        }
    }
    return worst;
}

std::optional<Verdict> Coprocessor::check_physio_infusion(const ActuatorCmdMsg& cmd, SimTime now)
{
    const std::string trigger = describe(cmd);
    if (!bg_cache()) {
        return make(now, kPhysioContextRuleId, RuleCategory::Physiological, Decision::Block,
                    "no physiological context: no BG reading observed yet", trigger);
    }
    const double units = cmd.amount * kUnitsPerPumpUnit;
    const bool as_bolus = infuse_context_ != ProgramState::ComputeBasal;
    const bool as_basal = infuse_context_ != ProgramState::ComputeBolus;
    for (const auto* rule : physio_rules_) {
        std::string why;
        switch (rule->kind) {
        case PhysioKind::MaxBolus:
            if (as_bolus && units > rule->limit + 1e-9) {
                why = fmt::format("bolus {:.1f} U exceeds {:g} U", units, rule->limit);
            }
            break;
        case PhysioKind::MinBolusInterval:
            if (as_bolus && last_bolus_ && now - *last_bolus_ < from_minutes(rule->limit)) {
                why = fmt::format("bolus {:.1f} min after the previous one (minimum {:g} min)",
                                  to_minutes(now - *last_bolus_), rule->limit);
            }
            break;
        case PhysioKind::MaxBasalRate: {
            const double rate = units * 60.0 / rules_.config.basal_period_min;
            if (as_basal && rate > rule->limit + 1e-9) {
                why = fmt::format("basal rate {:.2f} U/h exceeds {:g} U/h", rate, rule->limit);
            }
            break;
        }
        case PhysioKind::BgRange:
        case PhysioKind::BgRate: break;
        }
        if (!why.empty()) {
            return make(now, rule->id, RuleCategory::Physiological, Decision::Block, why, trigger);
        }
    }
    return std::nullopt;
}

std::vector<Verdict> Coprocessor::on_actuator(const ActuatorCmdMsg& cmd, SimTime now)
{
    std::vector<Verdict> out;
    const std::string trigger = describe(cmd);
    auto finish = [&](Verdict v) {
        v.command = cmd;
        record(v);
        out.push_back(v);
        return out;
    };

    if (auto io = check_io_access(cmd.device, now, trigger)) {
        if (io->decision == Decision::Block) {
            return finish(*io);
        }
        record(*io);
        out.push_back(*io);
    }
    if (cmd.device == Device::Pump) {
        if (auto physio = check_physio_infusion(cmd, now)) {
            return finish(*physio);
        }
    }

    InfusionMode mode = cmd.mode;
    if (infuse_context_ == ProgramState::ComputeBasal) {
        mode = InfusionMode::Basal;
    } else if (infuse_context_ == ProgramState::ComputeBolus) {
        mode = InfusionMode::Bolus;
    }
    const double units = cmd.amount * kUnitsPerPumpUnit;
    const std::string rule = io_rules_.empty() ? std::string("io-access") : io_rules_.front()->id;
    Verdict allow = make(now, rule, RuleCategory::IoAccess, Decision::Allow,
                         fmt::format("{} {} {:.1f} U forwarded", to_string(cmd.device), to_string(mode), units),
                         trigger);
    if (cmd.device == Device::Pump) {
        doses_.push_back({now, mode, units, cmd.seq});
        if (mode == InfusionMode::Bolus) {
            last_bolus_ = now;
            for (const auto* t : timed_rules_) {
                if (t->kind == TimedKind::ExpectBgRiseAfterBolus) {
                    expect_rise_.push_back({t, now, *bg_cache(), false, *bg_cache()});
                }
            }
        }
    }
    return finish(allow);
}

std::vector<Verdict> Coprocessor::on_snoop(const SensorSnoopMsg& snoop, SimTime now)
{
    std::vector<Verdict> out;
    if (auto io = check_io_access(snoop.device, now, describe(snoop))) {
        // passive observation: nothing to drop, so a violation is only reported
        io->decision = Decision::Warn;
        record(*io);
        out.push_back(*io);
    }
    if (snoop.bg) {
        auto more = check_physio_bg_level(*snoop.bg, now);
        out.insert(out.end(), more.begin(), more.end());
    }
    return out;
}

std::vector<Verdict> Coprocessor::check_physio_bg_level(double bg, SimTime now)
{
    std::vector<Verdict> out;
    const std::string trigger = fmt::format("BG sample {:.1f} mg/dL", bg);
    auto warn = [&](const std::string& id, RuleCategory cat, std::string detail) {
        Verdict v = make(now, id, cat, Decision::Warn, std::move(detail), trigger);
        record(v);
        out.push_back(v);
    };

    // valid until the new sample is appended at the end
    const BgObservation* prev = bg_samples_.empty() ? nullptr : &bg_samples_.back();

    for (const auto* rule : physio_rules_) {
        if (rule->kind == PhysioKind::BgRange) {
            if (bg < 0.0) {
                warn(rule->id, RuleCategory::Physiological, "SENSOR ERROR");
            } else if (bg < rule->lo) {
                warn(rule->id, RuleCategory::Physiological, "BG LEVEL VERY LOW");
            } else if (bg > rule->hi) {
                warn(rule->id, RuleCategory::Physiological, "BG LEVEL VERY HIGH");
            }
        } else if (rule->kind == PhysioKind::BgRate && prev && bg >= 0.0 && prev->bg >= 0.0 && now > prev->at) {
            const double rate = (bg - prev->bg) / to_minutes(now - prev->at);
            if (std::abs(rate) > rule->limit) {
                warn(rule->id, RuleCategory::Physiological,
                     fmt::format("BG changing at {:+.1f} mg/dL/min (limit {:g})", rate, rule->limit));
            }
        }
    }

    // Sensor faults are not fed to the trend rules.
    if (bg < 0.0) {
        return out;
    }

    for (auto it = expect_rise_.begin(); it != expect_rise_.end();) {
        const double drop = it->rule->threshold;
        bool retire = false;
        if (it->warning) {
            if (bg > it->last_bg) {
                retire = true;
            } else {
                warn(it->rule->id, RuleCategory::TimeTriggered,
                     fmt::format("BG still falling after bolus: {:.1f} mg/dL (was {:.1f} at infusion)", bg,
                                 it->bg_at_infusion));
            }
        } else if (bg >= it->bg_at_infusion + drop) {
            retire = true;
        } else if (bg < it->bg_at_infusion - drop) {
            it->warning = true;
            warn(it->rule->id, RuleCategory::TimeTriggered,
                 fmt::format("BG fell {:.1f} mg/dL below the {:.1f} mg/dL at bolus; no carbohydrate uptake seen",
                             it->bg_at_infusion - bg, it->bg_at_infusion));
        } else if (now - it->start > from_minutes(it->rule->window_min)) {
            retire = true;
        }
        it->last_bg = bg;
        it = retire ? expect_rise_.erase(it) : it + 1;
    }

    for (const auto* rule : timed_rules_) {
        if (rule->kind != TimedKind::WarnBgRiseNoBolus || !prev || bg <= prev->bg) {
            continue;
        }
        const SimDuration window = from_minutes(rule->window_min);
        if (last_bolus_ && now - *last_bolus_ <= window) {
            continue;
        }
        double lowest = bg;
        for (auto s = bg_samples_.rbegin(); s != bg_samples_.rend() && now - s->at <= window; ++s) {
            if (s->bg >= 0.0) {
                lowest = std::min(lowest, s->bg);
            }
        }
        if (bg - lowest > rule->threshold) {
            warn(rule->id, RuleCategory::TimeTriggered,
                 fmt::format("BG rose {:.1f} mg/dL within {:g} min with no bolus", bg - lowest, rule->window_min));
        }
    }

    bg_samples_.push_back({now, bg});
    return out;
}

std::vector<Verdict> Coprocessor::tick(SimTime now)
{
    std::vector<Verdict> out;
    for (const auto* rule : timed_rules_) {
        if (rule->kind != TimedKind::HeartbeatTimeout) {
            continue;
        }
        const SimTime deadline = last_heartbeat_ + rule->units * rules_.config.heartbeat_period;
        if (now < deadline) {
            continue;
        }
        Verdict w = make(now, rule->id, RuleCategory::TimeTriggered, Decision::Warn,
                         fmt::format("no heartbeat for {} periods; main controller unresponsive", rule->units),
                         fmt::format("last heartbeat at {} ms", ticks(last_heartbeat_)));
        record(w);
        out.push_back(w);
        if (rules_.config.emergency_basal_u_per_h > 0.0) {
            emergency_ = true;
        }
        if (rules_.config.reset_on_timeout) {
            Verdict r = w;
            r.decision = Decision::ResetMain;
            r.detail = "restarting main controller";
            record(r);
            out.push_back(r);
        }
        last_heartbeat_ = now;
    }

    for (const auto* rule : transition_rules_) {
        auto limit = rule->max_dwell.find(tracked_);
        if (dwell_warned_ || limit == rule->max_dwell.end() || now - entered_at_ <= limit->second) {
            continue;
        }
        dwell_warned_ = true;
        Verdict v = make(now, rule->id, RuleCategory::StateTransition, Decision::Warn,
                         fmt::format("{} held for {} ms (limit {} ms)", to_string(tracked_),
                                     (now - entered_at_).count(), limit->second.count()),
                         "dwell timer");
        record(v);
        out.push_back(v);
    }

    std::erase_if(expect_rise_, [&](const ExpectRise& e) {
        return !e.warning && now - e.start > from_minutes(e.rule->window_min);
    });
    return out;
}

void Coprocessor::main_reset(SimTime now)
{
    tracked_ = ProgramState::Idle;
    entered_at_ = now;
    dwell_warned_ = false;
    infuse_context_.reset();
    entry_accesses_.clear();
}

std::optional<SimTime> Coprocessor::next_deadline() const
{
    std::optional<SimTime> best;
    auto consider = [&](SimTime t) {
        if (!best || t < *best) {
            best = t;
        }
    };
    for (const auto* rule : timed_rules_) {
        if (rule->kind == TimedKind::HeartbeatTimeout) {
            consider(last_heartbeat_ + rule->units * rules_.config.heartbeat_period);
        }
    }
    if (!dwell_warned_) {
        for (const auto* rule : transition_rules_) {
            auto limit = rule->max_dwell.find(tracked_);
            if (limit != rule->max_dwell.end()) {
                consider(entered_at_ + limit->second + SimDuration{1});
            }
        }
    }
    return best;
}

std::vector<Action> Coprocessor::dispatch(const Verdict& v) const
{
    if (v.decision == Decision::Allow) {
        if (!v.command) {
            return {};
        }
        return {ForwardCommand{*v.command, v.at + rules_.config.processing}};
    }
    return follow_up(v);
}

std::vector<Action> Coprocessor::follow_up(const Verdict& v) const
{
    std::vector<Action> out;
    const RaiseAlarm alarm{{v.at, v.rule_id, v.decision, v.detail}};
    switch (v.decision) {
    case Decision::Allow: throw std::invalid_argument("follow_up needs a non-ALLOW verdict");
    case Decision::Block:
        if (v.command) {
            out.push_back(NotifyBlocked{v.command->seq});
        }
        out.push_back(alarm);
        break;
    case Decision::Warn:
        out.push_back(alarm);
        if (rules_.config.emergency_basal_u_per_h > 0.0) {
            const auto* rule = rules_.find(v.rule_id);
            const auto* timed = rule ? std::get_if<TimeTriggeredRule>(rule) : nullptr;
            if (timed && timed->kind == TimedKind::HeartbeatTimeout) {
                out.push_back(StartEmergencyBasal{rules_.config.emergency_basal_u_per_h});
            }
        }
        break;
    case Decision::ResetMain:
        out.push_back(ResetMain{});
        out.push_back(alarm);
        break;
    }
    return out;
}

}  // namespace apsim
