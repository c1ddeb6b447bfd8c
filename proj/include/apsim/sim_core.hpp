#pragma once

// Virtual clock, deterministic event queue and UART byte-rate model.

#include <chrono>
#include <cstdint>
#include <functional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace apsim {

// Simulation clock: integer milliseconds since the start of the run.
struct SimClock {
    using rep = std::int64_t;
    using period = std::milli;
    using duration = std::chrono::duration<rep, period>;
    using time_point = std::chrono::time_point<SimClock>;
    static constexpr bool is_steady = true;
};

using SimDuration = SimClock::duration;
using SimTime = SimClock::time_point;

constexpr SimTime at_ms(std::int64_t ms) { return SimTime{SimDuration{ms}}; }
constexpr std::int64_t ticks(SimTime t) { return t.time_since_epoch().count(); }
constexpr SimDuration minutes_ms(std::int64_t m) { return SimDuration{m * 60'000}; }

// Rounds a (possibly fractional) minute count to the nearest millisecond.
SimDuration from_minutes(double minutes);
double to_minutes(SimDuration d);
inline double to_minutes(SimTime t) { return to_minutes(t.time_since_epoch()); }

enum class ComponentId : std::uint8_t {
    Harness,
    Patient,
    Cgm,
    Firmware,
    Coprocessor,
    Channel,
    Pump,
};

const char* to_string(ComponentId id);

class SchedulingError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

template <typename Payload>
struct Event {
    SimTime at;
    ComponentId source;
    Payload payload;
    std::uint64_t seq = 0;  // insertion index, tie-break for equal timestamps
};

// Single-threaded discrete-event kernel. Events are delivered in
// (timestamp, insertion order); handlers may schedule further events at or
// after the current time.
template <typename Payload>
class Simulator {
public:
    using EventType = Event<Payload>;
    using Handler = std::function<void(const EventType&)>;

    SimTime now() const { return now_; }
    bool empty() const { return queue_.empty(); }
    std::size_t pending() const { return queue_.size(); }

    void schedule(SimTime at, ComponentId source, Payload payload)
    {
        if (at < now_) {
            throw SchedulingError("event scheduled at " + std::to_string(ticks(at)) +
                                  " ms, before current time " + std::to_string(ticks(now_)) + " ms");
        }
        queue_.push(EventType{at, source, std::move(payload), next_seq_++});
    }

    void schedule(const EventType& ev) { schedule(ev.at, ev.source, ev.payload); }

    // Processes every event with at <= t_end, then parks the clock at t_end.
    std::vector<EventType> run_until(SimTime t_end, const Handler& handler)
    {
        if (t_end < now_) {
            throw SchedulingError("run_until target " + std::to_string(ticks(t_end)) +
                                  " ms is before current time " + std::to_string(ticks(now_)) + " ms");
        }
        std::vector<EventType> log;
        while (!queue_.empty() && queue_.top().at <= t_end) {
            EventType ev = queue_.top();
            queue_.pop();
            now_ = ev.at;
            if (handler) {
                handler(ev);
            }
            log.push_back(std::move(ev));
        }
        now_ = t_end;
        return log;
    }

private:
    struct Later {
        bool operator()(const EventType& a, const EventType& b) const
        {
            if (a.at != b.at) {
                return a.at > b.at;
            }
            return a.seq > b.seq;
        }
    };

    SimTime now_{};
    std::uint64_t next_seq_ = 0;
    std::priority_queue<EventType, std::vector<EventType>, Later> queue_;
};

// Lossless, order-preserving UART link. A frame of n bytes sent at t is
// delivered at t + ceil(n * bits_per_byte * 1000 / baud) ms, unless an
// earlier frame is still in flight past that instant, in which case it is
// delivered together with (and after) that frame.
class SerialChannel {
public:
    explicit SerialChannel(std::int64_t baud, int bits_per_byte = 10);

    std::int64_t baud() const { return baud_; }
    int bits_per_byte() const { return bits_per_byte_; }

    SimDuration latency(std::size_t bytes) const;

    // Returns the delivery time and records the frame as in flight.
    SimTime transmit(std::span<const std::uint8_t> frame, SimTime at);

private:
    std::int64_t baud_;
    int bits_per_byte_;
    SimTime last_delivery_{};
};

}  // namespace apsim
