#include "apsim/imc.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace apsim {

namespace {

enum Kind : std::uint8_t {
    kStateTransition = 0x01,
    kActuatorCmd = 0x02,
    kHeartbeat = 0x03,
    kSensorSnoop = 0x04,
    kBlockNotice = 0x05,
};

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void put_u16(Frame& f, std::uint16_t v)
{
    f.push_back(static_cast<std::uint8_t>(v & 0xFF));
    f.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(Frame& f, std::uint32_t v)
{
    for (int shift = 0; shift < 32; shift += 8) {
        f.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
    }
}

std::uint16_t get_u16(const Frame& f, std::size_t at)
{
    return static_cast<std::uint16_t>(f[at] | (f[at + 1] << 8));
}

std::uint32_t get_u32(const Frame& f, std::size_t at)
{
    std::uint32_t v = 0;
    for (int n = 3; n >= 0; --n) {
        v = (v << 8) | f[at + static_cast<std::size_t>(n)];
    }
    return v;
}

bool valid_state(std::uint8_t b) { return b <= static_cast<std::uint8_t>(ProgramState::Alert); }

}  // namespace

const char* to_string(ProgramState s)
{
    switch (s) {
    case ProgramState::Idle: return "IDLE";
    case ProgramState::RfAccess: return "RF_ACCESS";
    case ProgramState::ComputeBasal: return "COMPUTE_BASAL";
    case ProgramState::ComputeBolus: return "COMPUTE_BOLUS";
    case ProgramState::InfuseInsulin: return "INFUSE_INSULIN";
    case ProgramState::Alert: return "ALERT";
    }
    return "?";
}

std::optional<ProgramState> parse_program_state(std::string_view name)
{
    for (auto s : kAllProgramStates) {
        if (name == to_string(s)) {
            return s;
        }
    }
    return std::nullopt;
}

const char* to_string(Device d) { return d == Device::Pump ? "pump" : "rf"; }

std::optional<Device> parse_device(std::string_view name)
{
    if (name == "pump") {
        return Device::Pump;
    }
    if (name == "rf") {
        return Device::Rf;
    }
    return std::nullopt;
}

const char* to_string(InfusionMode m) { return m == InfusionMode::Basal ? "BASAL" : "BOLUS"; }

std::string describe(const ImcPayload& p)
{
    return std::visit(
        overloaded{
            [](const StateTransitionMsg& m) {
                return fmt::format("STATE_TRANSITION {}->{}", to_string(m.from), to_string(m.to));
            },
            [](const ActuatorCmdMsg& m) {
                return fmt::format("ACTUATOR_CMD {} {} amount={} seq={}", to_string(m.device),
                                   to_string(m.mode), m.amount, m.seq);
            },
            [](const HeartbeatMsg& m) { return fmt::format("HEARTBEAT seq={}", m.seq); },
            [](const SensorSnoopMsg& m) {
                return m.bg ? fmt::format("SENSOR_SNOOP {} bg={:.1f}", to_string(m.device), *m.bg)
                            : fmt::format("SENSOR_SNOOP {}", to_string(m.device));
            },
            [](const BlockNoticeMsg& m) { return fmt::format("BLOCK_NOTICE seq={}", m.seq); },
        },
        p);
}

std::size_t FrameLengths::for_payload(const ImcPayload& p) const
{
    return std::visit(overloaded{
                          [&](const StateTransitionMsg&) { return state_transition; },
                          [&](const ActuatorCmdMsg&) { return actuator_cmd; },
                          [&](const HeartbeatMsg&) { return heartbeat; },
                          [&](const SensorSnoopMsg&) { return sensor_snoop; },
                          [&](const BlockNoticeMsg&) { return block_notice; },
                      },
                      p);
}

Frame encode(const ImcPayload& p, std::size_t length)
{
    Frame f;
    f.reserve(length);
    std::visit(overloaded{
                   [&](const StateTransitionMsg& m) {
                       f.push_back(kStateTransition);
                       f.push_back(static_cast<std::uint8_t>(m.from));
                       f.push_back(static_cast<std::uint8_t>(m.to));
                   },
                   [&](const ActuatorCmdMsg& m) {
                       f.push_back(kActuatorCmd);
                       f.push_back(static_cast<std::uint8_t>(m.device));
                       f.push_back(static_cast<std::uint8_t>(m.mode));
                       put_u16(f, m.amount);
                       put_u16(f, m.seq);
                   },
                   [&](const HeartbeatMsg& m) {
                       f.push_back(kHeartbeat);
                       put_u32(f, m.seq);
                   },
                   [&](const SensorSnoopMsg& m) {
                       f.push_back(kSensorSnoop);
                       f.push_back(static_cast<std::uint8_t>(m.device));
                       f.push_back(m.bg ? 1 : 0);
                       // reading in 0.1 mg/dL, signed so sensor faults survive the trip
                       const auto deci = m.bg ? static_cast<std::int32_t>(std::lround(*m.bg * 10.0)) : 0;
                       put_u32(f, static_cast<std::uint32_t>(deci));
                   },
                   [&](const BlockNoticeMsg& m) {
                       f.push_back(kBlockNotice);
                       put_u16(f, m.seq);
                   },
               },
               p);
    if (f.size() < length) {
        f.resize(length, 0);
    }
    return f;
}

const char* to_string(DecodeError e)
{
    switch (e) {
    case DecodeError::Empty: return "empty frame";
    case DecodeError::UnknownKind: return "unknown message kind";
    case DecodeError::Truncated: return "truncated frame";
    case DecodeError::BadField: return "invalid field value";
    }
    return "?";
}

DecodeResult decode(const Frame& f)
{
    DecodeResult r;
    if (f.empty()) {
        r.error = DecodeError::Empty;
        return r;
    }
    r.kind_byte = f[0];
    auto need = [&](std::size_t n) {
        if (f.size() < n) {
            r.error = DecodeError::Truncated;
            return false;
        }
        return true;
    };
    switch (f[0]) {
    case kStateTransition:
        if (!need(3)) {
            return r;
        }
        if (!valid_state(f[1]) || !valid_state(f[2])) {
            r.error = DecodeError::BadField;
            return r;
        }
        r.payload = StateTransitionMsg{static_cast<ProgramState>(f[1]), static_cast<ProgramState>(f[2])};
        return r;
    case kActuatorCmd:
        if (!need(7)) {
            return r;
        }
        if (f[1] > 1 || f[2] > 1) {
            r.error = DecodeError::BadField;
            return r;
        }
        r.payload = ActuatorCmdMsg{static_cast<Device>(f[1]), get_u16(f, 3), static_cast<InfusionMode>(f[2]),
                                   get_u16(f, 5)};
        return r;
    case kHeartbeat:
        if (!need(5)) {
            return r;
        }
        r.payload = HeartbeatMsg{get_u32(f, 1)};
        return r;
    case kSensorSnoop: {
        if (!need(7)) {
            return r;
        }
        if (f[1] > 1 || f[2] > 1) {
            r.error = DecodeError::BadField;
            return r;
        }
        SensorSnoopMsg m{static_cast<Device>(f[1]), std::nullopt};
        if (f[2] == 1) {
            m.bg = static_cast<double>(static_cast<std::int32_t>(get_u32(f, 3))) / 10.0;
        }
        r.payload = m;
        return r;
    }
    case kBlockNotice:
        if (!need(3)) {
            return r;
        }
        r.payload = BlockNoticeMsg{get_u16(f, 1)};
        return r;
    default:
        r.error = DecodeError::UnknownKind;
        return r;
    }
}

}  // namespace apsim
