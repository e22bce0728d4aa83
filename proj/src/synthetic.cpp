#include "stsan/synthetic.hpp"

#include <cmath>
#include <random>
#include <unordered_set>

#include "stsan/rng.hpp"

namespace stsan {

GridSpec GenSpec::grid() const {
    GridSpec g;
    g.rows = rows;
    g.cols = cols;
    g.interval_minutes = interval_minutes;
    g.lat_min = lat0;
    g.lat_max = lat0 + rows * cell_deg;
    g.lon_min = lon0;
    g.lon_max = lon0 + cols * cell_deg;
    g.epoch_minutes = parse_timestamp_minutes(epoch);
    return g;
}

void GenSpec::validate() const {
    grid().validate();
    if (days < 1) throw ConfigError("synthetic days must be >= 1");
    if (base_rate < 0) throw ConfigError("base_rate must be >= 0");
    if (static_cast<int>(weekly.size()) != 7)
        throw ConfigError("weekly profile needs exactly 7 factors");
    for (double w : weekly)
        if (w < 0) throw ConfigError("weekly factors must be >= 0");
    if (hotspots < 0 || hotspots > rows * cols)
        throw ConfigError("hotspot count out of range");
}

double daily_profile(const GenSpec& spec, double hour) {
    auto bump = [&](double center, double amp) {
        const double d = hour - center;
        return amp * std::exp(-d * d / (2.0 * spec.width_hours * spec.width_hours));
    };
    return spec.daily_floor + bump(spec.morning_hour, spec.morning_amp) +
           bump(spec.evening_hour, spec.evening_amp);
}

Array attraction_matrix(const GenSpec& spec) {
    const int n = spec.rows * spec.cols;
    Rng rng = make_rng(spec.seed, 101);
    std::unordered_set<int> hot;
    std::uniform_int_distribution<int> pick(0, n - 1);
    while (static_cast<int>(hot.size()) < spec.hotspots) hot.insert(pick(rng));

    Array attr({n, n});
    double total = 0.0;
    for (int o = 0; o < n; ++o) {
        const int oi = o / spec.cols, oj = o % spec.cols;
        for (int d = 0; d < n; ++d) {
            const int di = d / spec.cols, dj = d % spec.cols;
            const double dist = std::abs(oi - di) + std::abs(oj - dj);
            double a = std::exp(-dist / spec.distance_scale);
            if (hot.count(d)) a *= (1.0 + spec.hotspot_gain);
            attr.at(o, d) = a;
            total += a;
        }
    }
    const double mean = total / (static_cast<double>(n) * n);
    for (auto& v : attr.data) v /= mean;
    return attr;
}

std::vector<TripRecord> generate_synthetic(const GenSpec& spec) {
    spec.validate();
    const GridSpec grid = spec.grid();
    const int n = grid.regions();
    const int64_t intervals = static_cast<int64_t>(spec.days) * grid.P_day();
    const int64_t horizon_end = grid.epoch_minutes + intervals * grid.interval_minutes;
    const Array attr = attraction_matrix(spec);

    Rng rng = make_rng(spec.seed, 202);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<TripRecord> trips;

    // region centers in lat/lon
    auto center_lat = [&](int i) { return grid.lat_min + (i + 0.5) * spec.cell_deg; };
    auto center_lon = [&](int j) { return grid.lon_min + (j + 0.5) * spec.cell_deg; };

    for (int64_t t = 0; t < intervals; ++t) {
        const int dow = grid.day_of_week(t);
        const double hour = grid.time_of_day(t) * grid.interval_minutes / 60.0;
        const double profile =
            daily_profile(spec, hour) * spec.weekly[static_cast<size_t>(dow)];
        if (profile <= 0.0) continue;
        const int64_t t_start = grid.interval_start_minutes(t);
        for (int o = 0; o < n; ++o) {
            const int oi = o / spec.cols, oj = o % spec.cols;
            for (int d = 0; d < n; ++d) {
                const double lambda = spec.base_rate * profile * attr.at(o, d);
                if (lambda <= 0.0) continue;
                std::poisson_distribution<int> pois(lambda);
                const int count = pois(rng);
                if (count == 0) continue;
                const int di = d / spec.cols, dj = d % spec.cols;
                const double dist = std::abs(oi - di) + std::abs(oj - dj);
                for (int c = 0; c < count; ++c) {
                    TripRecord trip;
                    trip.start_minutes =
                        t_start +
                        static_cast<int64_t>(unit(rng) * grid.interval_minutes);
                    const double travel = (spec.travel_base_minutes +
                                           spec.travel_per_cell_minutes * dist) *
                                          (0.8 + 0.4 * unit(rng));
                    trip.end_minutes =
                        trip.start_minutes + std::max<int64_t>(1, std::llround(travel));
                    if (trip.end_minutes >= horizon_end) trip.end_minutes = horizon_end - 1;
                    trip.start_lat = center_lat(oi);
                    trip.start_lon = center_lon(oj);
                    trip.end_lat = center_lat(di);
                    trip.end_lon = center_lon(dj);
                    trips.push_back(trip);
                }
            }
        }
    }
    return trips;
}

}  // namespace stsan
