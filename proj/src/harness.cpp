#include "apsim/harness.hpp"

#include "apsim/reference_monitor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include <fmt/format.h>

namespace apsim {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

enum class Link { MainToCoprocessor, CoprocessorToMain };

struct PatientTick {};
struct FrameDelivery {
    Link link;
    Frame bytes;
};
struct SnoopDelivery {
    SensorSnoopMsg snoop;
};
struct FirmwareResume {};
struct HeartbeatTimer {};
struct CoprocessorTimer {
    bool periodic;
};
struct PumpActuation {
    ActuatorCmdMsg command;
};
struct RunScriptAction {
    std::size_t index;
};

using Payload = std::variant<PatientTick, FrameDelivery, SnoopDelivery, FirmwareResume, HeartbeatTimer,
                             CoprocessorTimer, PumpActuation, RunScriptAction>;

class World final : public FirmwareLink {
public:
    World(const ScenarioScript& script, std::uint64_t seed, const RunOptions& opt)
        : script_(script),
          opt_(opt),
          rng_(seed),
          patient_(equilibrium_state(opt.patient)),
          main_link_(opt.baud, opt.bits_per_byte),
          reverse_link_(opt.baud, opt.bits_per_byte),
          firmware_(opt.therapy.params, opt.therapy.alarms, *this),
          coprocessor_(opt.rules),
          reference_(opt.rules)
    {
        report_.name = script.name;
        report_.seed = seed;
        report_.warmup_end = SimTime{} + from_minutes(script.warmup_min);
        report_.end = report_.warmup_end + from_minutes(script.duration_min);
        report_.min_bg = report_.max_bg = patient_.bg;
    }

    ScenarioReport run()
    {
        const SimTime start{};
        sim_.schedule(start, ComponentId::Patient, PatientTick{});
        sim_.schedule(start + opt_.therapy.params.heartbeat_period, ComponentId::Firmware, HeartbeatTimer{});
        sim_.schedule(start, ComponentId::Coprocessor, CoprocessorTimer{true});
        for (std::size_t i = 0; i < script_.actions.size(); ++i) {
            sim_.schedule(report_.warmup_end + from_minutes(script_.actions[i].at_min), ComponentId::Harness,
                          RunScriptAction{i});
        }
        sim_.run_until(report_.end, [this](const Event<Payload>& ev) { handle(ev); });

        report_.verdicts = coprocessor_.verdicts();
        report_.alarms = coprocessor_.alarms();
        report_.counters = tally(report_.verdicts);
        report_.coprocessor_bg = coprocessor_.bg_samples();
        report_.firmware_log = firmware_.log();
        for (const auto& d : firmware_.doses()) {
            report_.firmware_commands.push_back({d.at, d.seq, d.kind, d.amount, d.redirected});
        }
        return std::move(report_);
    }

    SimTime send(const ImcPayload& msg, SimTime now) override
    {
        Frame frame = encode(msg, opt_.frames.for_payload(msg));
        const SimTime delivery = main_link_.transmit(frame, now);
        note(now, "firmware", "tx " + describe(msg));
        sim_.schedule(delivery, ComponentId::Channel, FrameDelivery{Link::MainToCoprocessor, std::move(frame)});
        return delivery;
    }

    void rf_access(const SensorSnoopMsg& snoop, SimTime now) override
    {
        sim_.schedule(now, ComponentId::Cgm, SnoopDelivery{snoop});
    }

private:
    void note(SimTime at, const char* who, const std::string& what)
    {
        if (opt_.record_events) {
            report_.event_log.push_back(fmt::format("{} {} {}", ticks(at), who, what));
        }
    }

    void handle(const Event<Payload>& ev)
    {
        const SimTime now = ev.at;
        std::visit(overloaded{
                       [&](const PatientTick&) { on_patient_tick(now); },
                       [&](const FrameDelivery& f) { on_frame(f, now); },
                       [&](const SnoopDelivery& s) { on_snoop(s.snoop, now); },
                       [&](const FirmwareResume&) {
                           if (scheduled_resume_ == now) {
                               scheduled_resume_.reset();
                           }
                           drive_firmware(now);
                       },
                       [&](const HeartbeatTimer&) {
                           firmware_.heartbeat(now);
                           sim_.schedule(now + opt_.therapy.params.heartbeat_period, ComponentId::Firmware,
                                         HeartbeatTimer{});
                       },
                       [&](const CoprocessorTimer& t) {
                           if (!t.periodic) {
                               armed_deadlines_.erase(now);
                           }
                           apply(coprocessor_.tick(now), now);
                           if (t.periodic) {
                               sim_.schedule(now + opt_.rules.config.tick_period, ComponentId::Coprocessor,
                                             CoprocessorTimer{true});
                           }
                       },
                       [&](const PumpActuation& p) { on_pump(p.command, now); },
                       [&](const RunScriptAction& a) { on_script(script_.actions[a.index].action, now); },
                   },
                   ev.payload);
    }

    void on_patient_tick(SimTime now)
    {
        const double dt_min = to_minutes(opt_.patient_step);
        if (now > SimTime{}) {
            if (coprocessor_.emergency_basal_active()) {
                const double u = opt_.rules.config.emergency_basal_u_per_h * dt_min / 60.0;
                pending_insulin_ += u;
                report_.emergency_insulin_u += u;
                report_.insulin_delivered_u += u;
                since_trace_insulin_ += u;
            }
            patient_ = step(patient_, opt_.patient, dt_min, pending_insulin_, pending_carbs_);
            pending_insulin_ = 0.0;
            pending_carbs_ = 0.0;
            const double parts[] = {patient_.bg, patient_.gut_carbs, patient_.sc_insulin_1, patient_.sc_insulin_2,
                                    patient_.plasma_insulin};
            if (std::any_of(std::begin(parts), std::end(parts), [](double v) { return !(v >= 0.0); })) {
                ++report_.negative_compartments;
            }
            report_.min_bg = std::min(report_.min_bg, patient_.bg);
            report_.max_bg = std::max(report_.max_bg, patient_.bg);
        }
        patient_.time = now;

        if ((now - SimTime{}) % opt_.cgm_period == SimDuration::zero()) {
            const CgmSample s = sample_cgm(patient_, opt_.patient.noise_sd, rng_);
            report_.bg_trace.push_back({now, patient_.bg, s.bg_reading, since_trace_insulin_});
            since_trace_insulin_ = 0.0;
            note(now, "cgm", fmt::format("sample {:.2f} (true {:.2f})", s.bg_reading, patient_.bg));
            firmware_.on_cgm(s.bg_reading, now);
            drive_firmware(now);
        }
        if (now + opt_.patient_step <= report_.end) {
            sim_.schedule(now + opt_.patient_step, ComponentId::Patient, PatientTick{});
        }
    }

    void on_frame(const FrameDelivery& f, SimTime now)
    {
        if (f.link == Link::CoprocessorToMain) {
            const DecodeResult r = decode(f.bytes);
            if (r.payload) {
                if (const auto* notice = std::get_if<BlockNoticeMsg>(&*r.payload)) {
                    note(now, "firmware", describe(*r.payload));
                    firmware_.on_block_notice(notice->seq, now);
                }
            }
            return;
        }

        const DecodeResult r = decode(f.bytes);
        std::optional<Decision> reference;
        if (r.payload) {
            note(now, "coprocessor", "rx " + describe(*r.payload));
            std::visit(overloaded{
                           [&](const StateTransitionMsg& m) { reference_.observe_transition(m.from, m.to, now); },
                           [&](const ActuatorCmdMsg& m) { reference = reference_.classify(m, now); },
                           [&](const HeartbeatMsg&) { report_.heartbeats_received.push_back(now); },
                           [&](const auto&) {},
                       },
                       *r.payload);
        } else {
            note(now, "coprocessor", fmt::format("rx undecodable frame ({})", to_string(r.error)));
        }

        const auto verdicts = coprocessor_.on_frame(f.bytes, now);
        if (reference) {
            for (const auto& v : verdicts) {
                if (v.command && (v.decision == Decision::Allow || v.decision == Decision::Block)) {
                    report_.cross_checks.push_back({now, v.command->seq, v.decision, *reference});
                }
            }
        }
        apply(verdicts, now);
    }

    void on_snoop(const SensorSnoopMsg& snoop, SimTime now)
    {
        reference_.observe_access(snoop.device, now);
        if (snoop.bg) {
            reference_.observe_bg(*snoop.bg);
        }
        note(now, "coprocessor", "snoop " + describe(snoop));
        apply(coprocessor_.on_imc_message(ImcMessage{snoop, opt_.frames.sensor_snoop, now}, now), now);
    }

    void on_pump(const ActuatorCmdMsg& cmd, SimTime now)
    {
        if (cmd.device != Device::Pump) {
            return;
        }
        const double units = cmd.amount * kUnitsPerPumpUnit;
        pending_insulin_ += units;
        since_trace_insulin_ += units;
        report_.insulin_delivered_u += units;
        report_.actuations.push_back({now, cmd, units});
        note(now, "pump", fmt::format("deliver {:.1f} U seq={}", units, cmd.seq));
    }

    void on_script(const ScriptActionKind& action, SimTime now)
    {
        note(now, "script", describe(action));
        std::visit(overloaded{
                       [&](const RfPacket& p) {
                           firmware_.on_rf_packet(p, now);
                           drive_firmware(now);
                       },
                       [&](const Meal& m) {
                           pending_carbs_ += m.grams;
                           report_.carbs_ingested_g += m.grams;
                       },
                       [&](const DisableFirmware&) { firmware_.disable(now); },
                       [&](const EnableFirmware&) {
                           firmware_.enable(now);
                           drive_firmware(now);
                       },
                       [&](const InjectFrame& f) {
                           const SimTime delivery = main_link_.transmit(f.bytes, now);
                           sim_.schedule(delivery, ComponentId::Harness,
                                         FrameDelivery{Link::MainToCoprocessor, f.bytes});
                       },
                   },
                   action);
    }

    void apply(const std::vector<Verdict>& verdicts, SimTime now)
    {
        for (const auto& v : verdicts) {
            note(now, "verdict", fmt::format("{} {} {}", v.rule_id, to_string(v.decision), v.detail));
            for (const auto& action : coprocessor_.dispatch(v)) {
                std::visit(overloaded{
                               [&](const ForwardCommand& f) {
                                   sim_.schedule(f.at, ComponentId::Coprocessor, PumpActuation{f.command});
                               },
                               [&](const NotifyBlocked& n) {
                                   const ImcPayload msg = BlockNoticeMsg{n.seq};
                                   Frame frame = encode(msg, opt_.frames.block_notice);
                                   const SimTime delivery =
                                       reverse_link_.transmit(frame, now + opt_.rules.config.processing);
                                   sim_.schedule(delivery, ComponentId::Channel,
                                                 FrameDelivery{Link::CoprocessorToMain, std::move(frame)});
                               },
                               [&](const RaiseAlarm&) {},
                               [&](const ResetMain&) {
                                   firmware_.reset(now);
                                   coprocessor_.main_reset(now);
                                   reference_.observe_reset(now);
                                   drive_firmware(now);
                               },
                               [&](const StartEmergencyBasal& e) {
                                   note(now, "coprocessor", fmt::format("emergency basal {:g} U/h", e.u_per_h));
                               },
                           },
                           action);
            }
        }
        arm_deadline(now);
    }

    void arm_deadline(SimTime now)
    {
        auto d = coprocessor_.next_deadline();
        if (!d) {
            return;
        }
        const SimTime at = std::max(*d, now);
        if (at <= report_.end && armed_deadlines_.insert(at).second) {
            sim_.schedule(at, ComponentId::Coprocessor, CoprocessorTimer{false});
        }
    }

    void drive_firmware(SimTime now)
    {
        const auto resume = firmware_.advance(now);
        if (resume && scheduled_resume_ != resume) {
            scheduled_resume_ = resume;
            sim_.schedule(*resume, ComponentId::Firmware, FirmwareResume{});
        }
    }

    const ScenarioScript& script_;
    const RunOptions& opt_;
    std::mt19937_64 rng_;
    Simulator<Payload> sim_;
    PatientState patient_;
    SerialChannel main_link_;
    SerialChannel reverse_link_;
    Firmware firmware_;
    Coprocessor coprocessor_;
    ReferenceMonitor reference_;

    double pending_insulin_ = 0.0;
    double pending_carbs_ = 0.0;
    double since_trace_insulin_ = 0.0;
    std::optional<SimTime> scheduled_resume_;
    std::set<SimTime> armed_deadlines_;
    ScenarioReport report_;
};

}  // namespace

int ScenarioReport::cross_check_mismatches() const
{
    return static_cast<int>(std::count_if(cross_checks.begin(), cross_checks.end(),
                                          [](const CrossCheck& c) { return c.coprocessor != c.reference; }));
}

double ScenarioReport::delivered_for(std::uint16_t seq) const
{
    double total = 0.0;
    for (const auto& a : actuations) {
        if (a.command.seq == seq) {
            total += a.units;
        }
    }
    return total;
}

Counters tally(const std::vector<Verdict>& verdicts)
{
    Counters c;
    for (const auto& v : verdicts) {
        switch (v.decision) {
        case Decision::Allow: ++c.allowed; break;
        case Decision::Block: ++c.blocked; break;
        case Decision::Warn: ++c.warned; break;
        case Decision::ResetMain: ++c.resets; break;
        }
    }
    return c;
}

RunOptions apply_overrides(const ScenarioScript& script, const RunOptions& base)
{
    RunOptions opt = base;
    for (const auto& [key, value] : script.patient_overrides) {
        set_patient_field(opt.patient, key, value);
    }
    for (const auto& [key, value] : script.therapy_overrides) {
        set_therapy_field(opt.therapy, key, value);
    }
    try {
        opt.patient.validate();
        opt.therapy.params.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigFileError(fmt::format("{}: {}", script.name, e.what()));
    }
    opt.rules.validate();
    if (opt.patient_step <= SimDuration::zero() || opt.cgm_period <= SimDuration::zero() ||
        opt.cgm_period % opt.patient_step != SimDuration::zero()) {
        throw ConfigFileError("cgm_period must be a positive multiple of patient_step");
    }
    return opt;
}

ScenarioReport run_scenario(const ScenarioScript& script, std::uint64_t seed, const RunOptions& base)
{
    script.validate();
    const RunOptions opt = apply_overrides(script, base);
    World world(script, seed, opt);
    return world.run();
}

}  // namespace apsim
