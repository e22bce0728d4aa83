#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsan/array.hpp"
#include "stsan/grid.hpp"

namespace stsan {

// Synthetic trip generator: Poisson counts per (origin, destination,
// interval) with intensity
//   base_rate * daily(time-of-day) * weekly[day-of-week] * attraction(o, d).
// The daily profile is a floor plus two Gaussian rush-hour bumps; the
// attraction matrix combines distance decay with seeded hotspot
// destinations, normalized to mean 1 over all pairs.
struct GenSpec {
    int rows = 8;
    int cols = 8;
    int interval_minutes = 30;
    int days = 40;
    std::string epoch = "2024-01-01 00:00";  // a Monday

    double base_rate = 0.05;  // mean trips per od pair per interval at profile 1

    double daily_floor = 0.15;
    double morning_amp = 1.0;
    double morning_hour = 8.5;
    double evening_amp = 1.2;
    double evening_hour = 17.5;
    double width_hours = 1.8;

    std::vector<double> weekly = {1, 1, 1, 1, 1, 1, 1};  // Monday first

    int hotspots = 3;
    double hotspot_gain = 6.0;
    double distance_scale = 3.0;  // cells, decay length of attraction

    double travel_base_minutes = 5.0;
    double travel_per_cell_minutes = 6.0;

    uint64_t seed = 7;

    // synthetic bounding box
    double lat0 = 40.0;
    double lon0 = -74.0;
    double cell_deg = 0.01;

    GridSpec grid() const;
    void validate() const;
};

double daily_profile(const GenSpec& spec, double hour_of_day);
Array attraction_matrix(const GenSpec& spec);  // regions x regions, mean 1

std::vector<TripRecord> generate_synthetic(const GenSpec& spec);

}  // namespace stsan
