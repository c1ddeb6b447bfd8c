#pragma once

// Inter-microcontroller (IMC) protocol shared by the firmware and the safety
// coprocessor: program states, message kinds and the byte framing used on
// the UART link.

#include "apsim/sim_core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace apsim {

enum class ProgramState : std::uint8_t {
    Idle,
    RfAccess,
    ComputeBasal,
    ComputeBolus,
    InfuseInsulin,
    Alert,
};

inline constexpr std::array kAllProgramStates{
    ProgramState::Idle,         ProgramState::RfAccess,      ProgramState::ComputeBasal,
    ProgramState::ComputeBolus, ProgramState::InfuseInsulin, ProgramState::Alert,
};

const char* to_string(ProgramState s);
std::optional<ProgramState> parse_program_state(std::string_view name);

enum class Device : std::uint8_t { Pump, Rf };
const char* to_string(Device d);
std::optional<Device> parse_device(std::string_view name);

enum class InfusionMode : std::uint8_t { Basal, Bolus };
const char* to_string(InfusionMode m);

// 1 pump unit = 0.1 U of insulin.
inline constexpr double kUnitsPerPumpUnit = 0.1;
inline constexpr std::uint16_t kPumpAmountCeiling = 0xFFFF;

struct StateTransitionMsg {
    ProgramState from;
    ProgramState to;
    bool operator==(const StateTransitionMsg&) const = default;
};

struct ActuatorCmdMsg {
    Device device = Device::Pump;
    std::uint16_t amount = 0;  // pump units
    InfusionMode mode = InfusionMode::Basal;  // as claimed by the firmware
    std::uint16_t seq = 0;
    bool operator==(const ActuatorCmdMsg&) const = default;
};

struct HeartbeatMsg {
    std::uint32_t seq = 0;
    bool operator==(const HeartbeatMsg&) const = default;
};

// Snooped RF activity. bg is present when the access carried a CGM reading.
struct SensorSnoopMsg {
    Device device = Device::Rf;
    std::optional<double> bg;
    bool operator==(const SensorSnoopMsg&) const = default;
};

// Coprocessor -> main controller: the command with this seq was dropped.
struct BlockNoticeMsg {
    std::uint16_t seq = 0;
    bool operator==(const BlockNoticeMsg&) const = default;
};

using ImcPayload = std::variant<StateTransitionMsg, ActuatorCmdMsg, HeartbeatMsg, SensorSnoopMsg, BlockNoticeMsg>;

struct ImcMessage {
    ImcPayload payload;
    std::size_t length = 0;  // bytes on the wire
    SimTime sent_at{};
};

std::string describe(const ImcPayload& p);

// Configured frame lengths. Frames are zero-padded up to these sizes.
struct FrameLengths {
    std::size_t state_transition = 8;
    std::size_t actuator_cmd = 240;
    std::size_t heartbeat = 8;
    std::size_t sensor_snoop = 8;
    std::size_t block_notice = 8;

    std::size_t for_payload(const ImcPayload& p) const;
};

using Frame = std::vector<std::uint8_t>;

// Wire layout: byte 0 is the kind tag, followed by little-endian fields and
// zero padding up to `length` (never shorter than the encoded fields).
Frame encode(const ImcPayload& p, std::size_t length);

enum class DecodeError { Empty, UnknownKind, Truncated, BadField };
const char* to_string(DecodeError e);

struct DecodeResult {
    std::optional<ImcPayload> payload;
    DecodeError error = DecodeError::Empty;
    std::uint8_t kind_byte = 0;
};

DecodeResult decode(const Frame& frame);

}  // namespace apsim
