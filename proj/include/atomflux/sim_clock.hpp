#pragma once

// Integer-microsecond event clock. Events at equal times pop in insertion
// (FIFO) order, which is what makes multi-module runs reproducible.

#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

namespace atomflux {

using Micros = std::int64_t;

constexpr Micros operator""_ms(unsigned long long v) {
    return static_cast<Micros>(v) * 1000;
}

struct SimEvent {
    Micros t = 0;
    std::string tag;
    std::int64_t arg = 0;
    std::uint64_t seq = 0; // insertion order, breaks time ties
};

struct EventLater {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.t != b.t) return a.t > b.t;
        return a.seq > b.seq;
    }
};

class SimClock {
public:
    Micros now() const { return now_; }

    void schedule(Micros at, std::string tag, std::int64_t arg = 0) {
        if (at < now_)
            throw std::invalid_argument("schedule: event time precedes now");
        queue_.push(SimEvent{at, std::move(tag), arg, seq_++});
    }

    bool empty() const { return queue_.empty(); }
    std::size_t pending() const { return queue_.size(); }

    // Pops the earliest event and advances now() to its time.
    std::optional<SimEvent> pop() {
        if (queue_.empty()) return std::nullopt;
        SimEvent ev = queue_.top();
        queue_.pop();
        now_ = ev.t;
        return ev;
    }

private:
    Micros now_ = 0;
    std::uint64_t seq_ = 0;
    std::priority_queue<SimEvent, std::vector<SimEvent>, EventLater> queue_;
};

} // namespace atomflux
