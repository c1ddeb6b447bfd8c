#pragma once

// Emulated main-controller firmware of the insulin pump: program state
// machine, basal/bolus dosing, RF packet handling and IMC reporting.

#include "apsim/imc.hpp"
#include "apsim/sim_core.hpp"

#include <deque>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace apsim {

struct TherapyParams {
    double carb_ratio = 20.0;          // g/U
    double correction_factor = 40.0;   // mg/dL per U
    double target_bg = 110.0;          // mg/dL
    double dia_min = 180.0;            // insulin action duration
    double max_bolus = 15.0;           // U
    double basal_rate = 1.0;           // U/h at target
    double max_basal_rate = 3.0;       // U/h
    double basal_gain = 0.01;          // U/h per mg/dL above target
    double basal_period_min = 10.0;
    int amount_max = 255;              // pump units per command
    std::size_t param_buffer_len = 32; // bytes accepted by the parameter update buffer
    SimDuration heartbeat_period = minutes_ms(1);

    // Throws std::invalid_argument on non-positive values or when max_bolus
    // exceeds the pump command ceiling.
    void validate() const;
};

enum class DoseKind { Basal, Bolus };
const char* to_string(DoseKind k);

struct DoseRecord {
    SimTime at{};
    DoseKind kind = DoseKind::Basal;
    double amount = 0.0;  // U
    std::uint16_t seq = 0;
    bool blocked = false;
    bool redirected = false;  // issued through a hijacked control path
};

struct CgmRecord {
    SimTime at{};
    double bg = 0.0;
};

// Active insulin from non-blocked boluses, linear decay over dia.
double insulin_on_board(const std::vector<DoseRecord>& history, SimTime now, double dia_min);

// carbs/ratio + (bg - target)/factor - iob, floored at 0 and capped at max_bolus.
double compute_bolus(double carbs, double current_bg, const TherapyParams& params, double iob);

// Proportional basal: clamp(basal_rate + gain * (bg - target), 0, max_basal_rate), U/h.
double compute_basal(const std::vector<CgmRecord>& cgm_history, const std::vector<DoseRecord>& dose_history,
                     const TherapyParams& params);

struct AlarmThresholds {
    double critical_lo = 60.0;
    double critical_hi = 300.0;
};

struct AlarmOutputs {
    bool error_raised = false;
    bool warn_high = false;
    bool warn_low = false;
    double computed_dose = 0.0;  // correction dose the firmware would suggest
};

// The firmware's sensor alarm and correction logic for one reading.
AlarmOutputs evaluate_alarms(double bg, const AlarmThresholds& thresholds, const TherapyParams& params);

enum class RfPacketKind { BolusRequest, ParamUpdate, Exploit };

struct RfPacket {
    RfPacketKind kind = RfPacketKind::BolusRequest;
    double carbs = 0.0;
    std::optional<double> requested_units;  // explicit dose; bypasses the calculator
    std::size_t payload_len = 8;
    std::string crafted_target;  // exploit redirection label ("pump_write")
    std::string param;           // PARAM_UPDATE target
    double value = 0.0;
};

inline constexpr const char* kExploitPumpWrite = "pump_write";

// Side-channel to the rest of the board. send() models a blocking UART
// transmission and returns the instant the frame has been delivered.
class FirmwareLink {
public:
    virtual ~FirmwareLink() = default;
    virtual SimTime send(const ImcPayload& msg, SimTime now) = 0;
    virtual void rf_access(const SensorSnoopMsg& snoop, SimTime now) = 0;
};

struct FirmwareLogEntry {
    SimTime at{};
    std::string text;
};

class Firmware {
public:
    Firmware(TherapyParams params, AlarmThresholds alarms, FirmwareLink& link);

    void on_cgm(double reading, SimTime now);
    void on_rf_packet(const RfPacket& packet, SimTime now);
    void on_block_notice(std::uint16_t seq, SimTime now);

    // Runs queued work until the next blocking send. Returns the time at which
    // advance() must be called again, or nothing when the firmware is idle.
    std::optional<SimTime> advance(SimTime now);

    // Emits a heartbeat unless the controller is hung.
    bool heartbeat(SimTime now);

    void disable(SimTime now);
    void enable(SimTime now);
    void reset(SimTime now);

    bool enabled() const { return enabled_; }
    bool busy() const { return !ops_.empty() || !jobs_.empty() || resume_at_.has_value(); }
    ProgramState state() const { return state_; }
    ProgramState reported_state() const { return reported_state_; }
    const TherapyParams& params() const { return params_; }
    const std::vector<DoseRecord>& doses() const { return doses_; }
    const std::vector<CgmRecord>& cgm_history() const { return cgm_; }
    const std::vector<FirmwareLogEntry>& log() const { return log_; }
    const std::vector<std::pair<ProgramState, ProgramState>>& reported_transitions() const { return reports_; }

private:
    struct Report { ProgramState to; };
    struct ReadRf { std::optional<double> bg; };
    struct AfterCgm {};
    struct ComputeBasal {};
    struct HandlePacket { RfPacket packet; };
    struct ComputeBolus { RfPacket packet; };
    struct PumpWrite { int units; InfusionMode mode; bool redirected; };
    struct ApplyParam { RfPacket packet; };
    using Op = std::variant<Report, ReadRf, AfterCgm, ComputeBasal, HandlePacket, ComputeBolus, PumpWrite, ApplyParam>;

    struct CgmJob { double reading; };
    struct RfJob { RfPacket packet; };
    using Job = std::variant<CgmJob, RfJob>;

    void start_job(const Job& job, SimTime now);
    // Executes one op; returns the delivery time if it performed a send.
    std::optional<SimTime> execute(Op op, SimTime now);
    std::optional<SimTime> send(const ImcPayload& msg, SimTime now);
    void note(SimTime at, std::string text);
    bool packet_well_formed(const RfPacket& p, std::string& why) const;
    bool apply_param(const RfPacket& p, std::string& why);
    template <typename... Ops>
    void push_front(Ops&&... ops);

    TherapyParams params_;
    AlarmThresholds alarms_;
    FirmwareLink& link_;

    ProgramState state_ = ProgramState::Idle;
    ProgramState reported_state_ = ProgramState::Idle;
    bool enabled_ = true;
    std::optional<SimTime> resume_at_;
    std::deque<Op> ops_;
    std::deque<Job> jobs_;

    double basal_carry_ = 0.0;
    std::uint16_t next_cmd_seq_ = 1;
    std::uint32_t next_heartbeat_seq_ = 0;
    std::vector<DoseRecord> doses_;
    std::vector<CgmRecord> cgm_;
    std::vector<FirmwareLogEntry> log_;
    std::vector<std::pair<ProgramState, ProgramState>> reports_;
};

}  // namespace apsim
