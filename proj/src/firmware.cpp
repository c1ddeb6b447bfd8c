#include "apsim/firmware.hpp"

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

int to_pump_units(double dose_u, int amount_max)
{
    // floor to the pump resolution so a dose is never rounded up
    const double units = std::floor(dose_u / kUnitsPerPumpUnit + 1e-9);
    return static_cast<int>(std::clamp(units, 0.0, static_cast<double>(amount_max)));
}

}  // namespace

void TherapyParams::validate() const
{
    const double values[] = {carb_ratio, correction_factor, target_bg, dia_min,
                             max_bolus,  basal_rate,        max_basal_rate, basal_period_min};
    for (double v : values) {
        if (!std::isfinite(v) || v <= 0.0) {
            throw std::invalid_argument("therapy parameters must be positive and finite");
        }
    }
    if (!std::isfinite(basal_gain) || basal_gain < 0.0) {
        throw std::invalid_argument("basal_gain must be finite and non-negative");
    }
    if (amount_max <= 0 || amount_max > kPumpAmountCeiling) {
        throw std::invalid_argument("amount_max must be in 1..65535 pump units");
    }
    if (max_bolus > amount_max * kUnitsPerPumpUnit + 1e-9) {
        throw std::invalid_argument("max_bolus exceeds the pump command ceiling");
    }
    if (param_buffer_len == 0 || heartbeat_period <= SimDuration::zero()) {
        throw std::invalid_argument("param_buffer_len and heartbeat_period must be positive");
    }
}

const char* to_string(DoseKind k) { return k == DoseKind::Basal ? "BASAL" : "BOLUS"; }

double insulin_on_board(const std::vector<DoseRecord>& history, SimTime now, double dia_min)
{
    double iob = 0.0;
    for (const auto& d : history) {
        if (d.kind != DoseKind::Bolus || d.blocked) {
            continue;
        }
        const double elapsed = to_minutes(now - d.at);
        iob += d.amount * std::max(0.0, 1.0 - elapsed / dia_min);
    }
    return iob;
}

double compute_bolus(double carbs, double current_bg, const TherapyParams& params, double iob)
{
    const double raw = carbs / params.carb_ratio + (current_bg - params.target_bg) / params.correction_factor - iob;
    return std::clamp(raw, 0.0, params.max_bolus);
}

double compute_basal(const std::vector<CgmRecord>& cgm_history, const std::vector<DoseRecord>& /*dose_history*/,
                     const TherapyParams& params)
{
    if (cgm_history.empty()) {
        throw std::invalid_argument("compute_basal needs at least one CGM sample");
    }
    const double bg = cgm_history.back().bg;
    return std::clamp(params.basal_rate + params.basal_gain * (bg - params.target_bg), 0.0, params.max_basal_rate);
}

AlarmOutputs evaluate_alarms(double bg, const AlarmThresholds& thresholds, const TherapyParams& params)
{
    AlarmOutputs out;
    out.error_raised = bg < 0.0;
    out.warn_low = bg < thresholds.critical_lo;
    out.warn_high = bg > thresholds.critical_hi;
    out.computed_dose = compute_bolus(0.0, std::max(bg, 0.0), params, 0.0);
    return out;
}

Firmware::Firmware(TherapyParams params, AlarmThresholds alarms, FirmwareLink& link)
    : params_(std::move(params)), alarms_(alarms), link_(link)
{
    params_.validate();
}

template <typename... Ops>
void Firmware::push_front(Ops&&... ops)
{
    Op list[] = {Op{std::forward<Ops>(ops)}...};
    for (auto it = std::rbegin(list); it != std::rend(list); ++it) {
        ops_.push_front(std::move(*it));
    }
}

void Firmware::note(SimTime at, std::string text) { log_.push_back({at, std::move(text)}); }

void Firmware::on_cgm(double reading, SimTime now)
{
    if (!enabled_) {
        note(now, "cgm sample lost: controller not responding");
        return;
    }
    jobs_.push_back(CgmJob{reading});
}

void Firmware::on_rf_packet(const RfPacket& packet, SimTime now)
{
    if (!enabled_) {
        note(now, "rf packet lost: controller not responding");
        return;
    }
    jobs_.push_back(RfJob{packet});
}

void Firmware::on_block_notice(std::uint16_t seq, SimTime now)
{
    if (!enabled_) {
        return;
    }
    for (auto& d : doses_) {
        if (d.seq == seq) {
            d.blocked = true;
        }
    }
    note(now, fmt::format("command seq={} blocked by safety coprocessor", seq));
}

bool Firmware::heartbeat(SimTime now)
{
    if (!enabled_) {
        return false;
    }
    link_.send(HeartbeatMsg{next_heartbeat_seq_++}, now);
    return true;
}

void Firmware::disable(SimTime now)
{
    enabled_ = false;
    note(now, "controller hung");
}

void Firmware::enable(SimTime now)
{
    enabled_ = true;
    note(now, "controller resumed");
}

void Firmware::reset(SimTime now)
{
    enabled_ = true;
    state_ = ProgramState::Idle;
    reported_state_ = ProgramState::Idle;
    ops_.clear();
    jobs_.clear();
    resume_at_.reset();
    note(now, "controller reset");
}

std::optional<SimTime> Firmware::advance(SimTime now)
{
    if (!enabled_) {
        return std::nullopt;
    }
    if (resume_at_) {
        if (now < *resume_at_) {
            return resume_at_;
        }
        resume_at_.reset();
    }
    for (;;) {
        if (ops_.empty()) {
            if (jobs_.empty()) {
                return std::nullopt;
            }
            Job job = std::move(jobs_.front());
            jobs_.pop_front();
            start_job(job, now);
            continue;
        }
        Op op = std::move(ops_.front());
        ops_.pop_front();
        if (auto done = execute(std::move(op), now)) {
            resume_at_ = done;
            return done;
        }
    }
}

void Firmware::start_job(const Job& job, SimTime /*now*/)
{
    std::visit(overloaded{
                   [&](const CgmJob& j) {
                       ops_.push_back(Report{ProgramState::RfAccess});
                       ops_.push_back(ReadRf{j.reading});
                       ops_.push_back(AfterCgm{});
                   },
                   [&](const RfJob& j) {
                       ops_.push_back(Report{ProgramState::RfAccess});
                       ops_.push_back(ReadRf{std::nullopt});
                       ops_.push_back(HandlePacket{j.packet});
                   },
               },
               job);
}

std::optional<SimTime> Firmware::send(const ImcPayload& msg, SimTime now) { return link_.send(msg, now); }

bool Firmware::packet_well_formed(const RfPacket& p, std::string& why) const
{
    switch (p.kind) {
    case RfPacketKind::BolusRequest:
        if (!std::isfinite(p.carbs) || p.carbs < 0.0) {
            why = "bolus request with invalid carbohydrate amount";
            return false;
        }
        if (p.requested_units && (!std::isfinite(*p.requested_units) || *p.requested_units < 0.0)) {
            why = "bolus request with invalid dose";
            return false;
        }
        if (p.payload_len > params_.param_buffer_len) {
            why = "oversized bolus request";
            return false;
        }
        return true;
    case RfPacketKind::ParamUpdate:
        if (p.payload_len > params_.param_buffer_len) {
            why = "oversized parameter update";
            return false;
        }
        return true;
    case RfPacketKind::Exploit:
        if (p.payload_len <= params_.param_buffer_len || p.crafted_target != kExploitPumpWrite) {
            why = "parameter packet with unusable overflow payload";
            return false;
        }
        return true;
    }
    return false;
}

bool Firmware::apply_param(const RfPacket& p, std::string& why)
{
    TherapyParams next = params_;
    if (p.param == "target_bg") {
        next.target_bg = p.value;
    } else if (p.param == "carb_ratio") {
        next.carb_ratio = p.value;
    } else if (p.param == "correction_factor") {
        next.correction_factor = p.value;
    } else if (p.param == "max_bolus") {
        next.max_bolus = p.value;
    } else if (p.param == "basal_rate") {
        next.basal_rate = p.value;
    } else if (p.param == "max_basal_rate") {
        next.max_basal_rate = p.value;
    } else {
        why = "unknown parameter '" + p.param + "'";
        return false;
    }
    try {
        next.validate();
    } catch (const std::invalid_argument& e) {
        why = e.what();
        return false;
    }
    params_ = next;
    return true;
}

std::optional<SimTime> Firmware::execute(Op op, SimTime now)
{
    return std::visit(
        overloaded{
            [&](const Report& r) -> std::optional<SimTime> {
                const ProgramState from = state_;
                state_ = r.to;
                reported_state_ = r.to;
                reports_.emplace_back(from, r.to);
                return send(StateTransitionMsg{from, r.to}, now);
            },
            [&](const ReadRf& r) -> std::optional<SimTime> {
                if (r.bg) {
                    cgm_.push_back({now, *r.bg});
                }
                link_.rf_access(SensorSnoopMsg{Device::Rf, r.bg}, now);
                return std::nullopt;
            },
            [&](const AfterCgm&) -> std::optional<SimTime> {
                const double bg = cgm_.back().bg;
                const AlarmOutputs a = evaluate_alarms(bg, alarms_, params_);
                if (a.error_raised || a.warn_low || a.warn_high) {
                    note(now, a.error_raised ? "SENSOR ERROR"
                              : a.warn_high  ? "BG LEVEL VERY HIGH"
                                             : "BG LEVEL VERY LOW");
                    push_front(Report{ProgramState::Alert}, Report{ProgramState::Idle},
                               Report{ProgramState::ComputeBasal}, ComputeBasal{});
                } else {
                    push_front(Report{ProgramState::Idle}, Report{ProgramState::ComputeBasal}, ComputeBasal{});
                }
                return std::nullopt;
            },
            [&](const ComputeBasal&) -> std::optional<SimTime> {
                const double rate = compute_basal(cgm_, doses_, params_);
                const double due = rate * params_.basal_period_min / 60.0 + basal_carry_;
                const int units = to_pump_units(due, params_.amount_max);
                basal_carry_ = std::max(0.0, due - units * kUnitsPerPumpUnit);
                if (units > 0) {
                    push_front(Report{ProgramState::InfuseInsulin}, PumpWrite{units, InfusionMode::Basal, false},
                               Report{ProgramState::Idle});
                } else {
                    push_front(Report{ProgramState::Idle});
                }
                return std::nullopt;
            },
            [&](const HandlePacket& h) -> std::optional<SimTime> {
                std::string why;
                if (!packet_well_formed(h.packet, why)) {
                    note(now, "dropped malformed packet: " + why);
                    push_front(Report{ProgramState::Idle});
                    return std::nullopt;
                }
                switch (h.packet.kind) {
                case RfPacketKind::BolusRequest:
                    push_front(Report{ProgramState::ComputeBolus}, ComputeBolus{h.packet});
                    break;
                case RfPacketKind::ParamUpdate:
                    push_front(ApplyParam{h.packet}, Report{ProgramState::Idle});
                    break;
                case RfPacketKind::Exploit:
                    // the overwritten return address lands on the pump write
                    // inside the infusion routine; no state reports are sent
                    push_front(PumpWrite{params_.amount_max, InfusionMode::Bolus, true}, Report{ProgramState::Idle});
                    break;
                }
                return std::nullopt;
            },
            [&](const ComputeBolus& c) -> std::optional<SimTime> {
                double dose = 0.0;
                if (c.packet.requested_units) {
                    dose = std::min(*c.packet.requested_units, params_.max_bolus);
                } else {
                    const double bg = cgm_.empty() ? params_.target_bg : cgm_.back().bg;
                    dose = compute_bolus(c.packet.carbs, bg, params_,
                                         insulin_on_board(doses_, now, params_.dia_min));
                }
                const int units = to_pump_units(dose, params_.amount_max);
                note(now, fmt::format("bolus request carbs={:.1f} g -> {:.1f} U", c.packet.carbs,
                                      units * kUnitsPerPumpUnit));
                if (units > 0) {
                    push_front(Report{ProgramState::InfuseInsulin}, PumpWrite{units, InfusionMode::Bolus, false},
                               Report{ProgramState::Idle});
                } else {
                    push_front(Report{ProgramState::InfuseInsulin}, Report{ProgramState::Idle});
                }
                return std::nullopt;
            },
            [&](const PumpWrite& w) -> std::optional<SimTime> {
                int amount = w.units;
                if (w.redirected) {
                    amount = params_.amount_max;
                } else if (amount > params_.amount_max) {
                    amount = params_.amount_max;
                }
                const std::uint16_t seq = next_cmd_seq_++;
                doses_.push_back({now, w.mode == InfusionMode::Basal ? DoseKind::Basal : DoseKind::Bolus,
                                  amount * kUnitsPerPumpUnit, seq, false, w.redirected});
                return send(ActuatorCmdMsg{Device::Pump, static_cast<std::uint16_t>(amount), w.mode, seq}, now);
            },
            [&](const ApplyParam& a) -> std::optional<SimTime> {
                std::string why;
                if (apply_param(a.packet, why)) {
                    note(now, fmt::format("parameter {} set to {}", a.packet.param, a.packet.value));
                } else {
                    note(now, "parameter update rejected: " + why);
                }
                return std::nullopt;
            },
        },
        op);
}

}  // namespace apsim
