#include "apsim/sim_core.hpp"

#include <algorithm>
#include <cmath>

namespace apsim {

SimDuration from_minutes(double minutes)
{
    return SimDuration{static_cast<SimClock::rep>(std::llround(minutes * 60'000.0))};
}

double to_minutes(SimDuration d) { return static_cast<double>(d.count()) / 60'000.0; }

const char* to_string(ComponentId id)
{
    switch (id) {
    case ComponentId::Harness: return "harness";
    case ComponentId::Patient: return "patient";
    case ComponentId::Cgm: return "cgm";
    case ComponentId::Firmware: return "firmware";
    case ComponentId::Coprocessor: return "coprocessor";
    case ComponentId::Channel: return "channel";
    case ComponentId::Pump: return "pump";
    }
    return "?";
}

SerialChannel::SerialChannel(std::int64_t baud, int bits_per_byte)
    : baud_(baud), bits_per_byte_(bits_per_byte)
{
    if (baud <= 0) {
        throw std::invalid_argument("serial channel baud rate must be positive");
    }
    if (bits_per_byte <= 0) {
        throw std::invalid_argument("serial channel bits_per_byte must be positive");
    }
}

SimDuration SerialChannel::latency(std::size_t bytes) const
{
    // ceil(bytes * bits * 1000 / baud), exact in integers
    const auto bits_ms = static_cast<std::int64_t>(bytes) * bits_per_byte_ * 1000;
    return SimDuration{(bits_ms + baud_ - 1) / baud_};
}

SimTime SerialChannel::transmit(std::span<const std::uint8_t> frame, SimTime at)
{
    if (frame.empty()) {
        throw std::invalid_argument("cannot transmit an empty frame");
    }
    const SimTime delivery = std::max(at + latency(frame.size()), last_delivery_);
    last_delivery_ = delivery;
    return delivery;
}

}  // namespace apsim
