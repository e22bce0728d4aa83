#include "stsan/flows.hpp"

namespace stsan {

EventTable extract_events(const std::vector<TripRecord>& trips, const GridSpec& grid,
                          int64_t intervals) {
    grid.validate();
    EventTable out;
    for (const auto& trip : trips) {
        const bool s_in = grid.in_box(trip.start_lat, trip.start_lon);
        const bool e_in = grid.in_box(trip.end_lat, trip.end_lon);
        const int64_t ts = grid.interval_of(trip.start_minutes);
        const int64_t te = grid.interval_of(trip.end_minutes);
        const bool s_ok = s_in && ts >= 0 && ts < intervals;
        const bool e_ok = e_in && te >= 0 && te < intervals;
        if (s_ok && e_ok) {
            OdEvent e;
            e.s_region = static_cast<int32_t>(
                grid.region_index(grid.row_of(trip.start_lat), grid.col_of(trip.start_lon)));
            e.e_region = static_cast<int32_t>(
                grid.region_index(grid.row_of(trip.end_lat), grid.col_of(trip.end_lon)));
            e.s_interval = static_cast<int32_t>(ts);
            e.e_interval = static_cast<int32_t>(te);
            out.od.push_back(e);
        } else if (s_ok) {
            out.partial.push_back({static_cast<int32_t>(grid.region_index(
                                       grid.row_of(trip.start_lat), grid.col_of(trip.start_lon))),
                                   static_cast<int32_t>(ts), kChannelOut});
        } else if (e_ok) {
            out.partial.push_back({static_cast<int32_t>(grid.region_index(
                                       grid.row_of(trip.end_lat), grid.col_of(trip.end_lon))),
                                   static_cast<int32_t>(te), kChannelIn});
        } else {
            ++out.skipped;
        }
    }
    return out;
}

FlowTensor flows_from_events(const EventTable& events, const GridSpec& grid, int64_t intervals) {
    grid.validate();
    FlowTensor f;
    f.grid = grid;
    f.intervals = intervals;
    f.values = Array::zeros({grid.rows, grid.cols, intervals, kFlowWidth});
    auto bump = [&](int32_t region, int32_t t, int channel) {
        int i, j;
        grid.region_of(region, i, j);
        f.at(i, j, t, channel) += 1.0;
    };
    for (const auto& e : events.od) {
        bump(e.s_region, e.s_interval, kChannelOut);
        bump(e.e_region, e.e_interval, kChannelIn);
    }
    for (const auto& p : events.partial) bump(p.region, p.interval, p.channel);
    return f;
}

FlowTensor build_flow_tensor(const std::vector<TripRecord>& trips, const GridSpec& grid,
                             int64_t intervals) {
    return flows_from_events(extract_events(trips, grid, intervals), grid, intervals);
}

TransitionTensor transitions_from_events(const EventTable& events, const GridSpec& grid,
                                         int64_t intervals, int focal_i, int focal_j) {
    if (focal_i < 0 || focal_i >= grid.rows || focal_j < 0 || focal_j >= grid.cols)
        throw DataError("focal region (" + std::to_string(focal_i) + "," +
                        std::to_string(focal_j) + ") outside the grid");
    TransitionTensor m;
    m.focal_i = focal_i;
    m.focal_j = focal_j;
    m.values = Array::zeros({grid.rows, grid.cols, intervals, kFlowWidth});
    const int32_t focal = static_cast<int32_t>(grid.region_index(focal_i, focal_j));
    for (const auto& e : events.od) {
        if (e.e_region == focal) {
            int i, j;
            grid.region_of(e.s_region, i, j);
            m.values.at(i, j, e.e_interval, kChannelIn) += 1.0;
        }
        if (e.s_region == focal) {
            int i, j;
            grid.region_of(e.e_region, i, j);
            m.values.at(i, j, e.s_interval, kChannelOut) += 1.0;
        }
    }
    return m;
}

TransitionTensor build_transition_tensor(const std::vector<TripRecord>& trips,
                                         const GridSpec& grid, int64_t intervals, int focal_i,
                                         int focal_j) {
    return transitions_from_events(extract_events(trips, grid, intervals), grid, intervals,
                                   focal_i, focal_j);
}

const Array& TransitionCache::get(int focal_i, int focal_j) const {
    const int key = grid_.region_index(focal_i, focal_j);
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    TransitionTensor t = transitions_from_events(*events_, grid_, intervals_, focal_i, focal_j);
    auto [pos, _] = cache_.emplace(key, std::move(t.values));
    return pos->second;
}

}  // namespace stsan
