#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "evmae/errors.hpp"

namespace evmae {

/// One DVS event: pixel location, microsecond timestamp, polarity
/// (1 = brightness increase, 0 = decrease).
struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint64_t t = 0;
    std::uint8_t p = 0;

    friend bool operator==(const Event&, const Event&) = default;
};

/// A bounded, time-sorted sequence of events. Immutable by convention once
/// built; safe to share read-only across threads.
struct EventStream {
    std::vector<Event> events;
    std::uint32_t width = 0;
    std::uint32_t height = 0;

    std::size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }

    /// stable sort by timestamp; tolerated reordering in real recordings is
    /// folded back into the monotone invariant here
    void sort_by_time() {
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
    }

    void validate_bounds() const {
        for (const Event& e : events) {
            require(e.x < width && e.y < height, errc::out_of_bounds,
                    "event at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                        ") outside sensor " + std::to_string(width) + "x" + std::to_string(height));
        }
    }
};

/// Partition a stream by polarity, preserving order.
inline std::pair<EventStream, EventStream> split_polarity(const EventStream& s) {
    EventStream pos{{}, s.width, s.height};
    EventStream neg{{}, s.width, s.height};
    for (const Event& e : s.events) {
        (e.p == 1 ? pos : neg).events.push_back(e);
    }
    return {std::move(pos), std::move(neg)};
}

}  // namespace evmae
