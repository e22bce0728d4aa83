#pragma once

#include <mutex>
#include <unordered_map>
#include <vector>

#include "stsan/array.hpp"
#include "stsan/grid.hpp"

namespace stsan {

inline constexpr int kChannelIn = 0;
inline constexpr int kChannelOut = 1;
inline constexpr int kFlowWidth = 2;  // w

// Grid-cell event forms of a trip, the common currency of flow and
// transition construction. Trips with one endpoint outside the bounding box
// contribute only the in-box endpoint (a partial event); only fully in-box
// trips carry origin-destination information.
struct OdEvent {
    int32_t s_region, e_region;
    int32_t s_interval, e_interval;
};

struct PartialEvent {
    int32_t region;
    int32_t interval;
    uint8_t channel;  // kChannelIn or kChannelOut
};

struct EventTable {
    std::vector<OdEvent> od;
    std::vector<PartialEvent> partial;
    int64_t skipped = 0;  // both endpoints out of box or out of time range
};

EventTable extract_events(const std::vector<TripRecord>& trips, const GridSpec& grid,
                          int64_t intervals);

// values: rows x cols x intervals x 2, channel 0 inflow / 1 outflow.
struct FlowTensor {
    Array values;
    GridSpec grid;
    int64_t intervals = 0;

    double& at(int i, int j, int64_t t, int channel) { return values.at(i, j, t, channel); }
    double at(int i, int j, int64_t t, int channel) const { return values.at(i, j, t, channel); }
};

FlowTensor flows_from_events(const EventTable& events, const GridSpec& grid, int64_t intervals);
FlowTensor build_flow_tensor(const std::vector<TripRecord>& trips, const GridSpec& grid,
                             int64_t intervals);

// values: rows x cols x intervals x 2 for one focal region; channel 0 holds
// in-transitions (from v_j into the focal region), channel 1 out-transitions.
struct TransitionTensor {
    Array values;
    int focal_i = 0, focal_j = 0;
};

TransitionTensor transitions_from_events(const EventTable& events, const GridSpec& grid,
                                         int64_t intervals, int focal_i, int focal_j);
TransitionTensor build_transition_tensor(const std::vector<TripRecord>& trips,
                                         const GridSpec& grid, int64_t intervals, int focal_i,
                                         int focal_j);

// Builds per-focal transition tensors on demand; the full N^2 history is
// never materialized. Safe for concurrent readers.
class TransitionCache {
public:
    TransitionCache(const EventTable& events, const GridSpec& grid, int64_t intervals)
        : events_(&events), grid_(grid), intervals_(intervals) {}

    const Array& get(int focal_i, int focal_j) const;

private:
    const EventTable* events_;
    GridSpec grid_;
    int64_t intervals_;
    mutable std::mutex mu_;
    mutable std::unordered_map<int, Array> cache_;
};

}  // namespace stsan
