#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsan/errors.hpp"

namespace stsan {

// Naive civil time in whole minutes since 1970-01-01 00:00.
int64_t days_from_civil(int year, int month, int day);
void civil_from_days(int64_t days, int& year, int& month, int& day);

// Accepts "YYYY-MM-DD HH:MM[:SS]" with ' ' or 'T' separator; seconds are
// truncated to the minute.
int64_t parse_timestamp_minutes(const std::string& text);
std::string format_timestamp(int64_t minutes);

// Geographic discretization: row i indexes latitude upward from lat_min,
// column j indexes longitude rightward from lon_min. Region n = i*J + j.
struct GridSpec {
    int rows = 8;  // I
    int cols = 8;  // J
    double lat_min = 0.0, lat_max = 1.0;
    double lon_min = 0.0, lon_max = 1.0;
    int interval_minutes = 30;
    int64_t epoch_minutes = 0;  // timestamp of interval 0

    void validate() const;
    int P_day() const { return 1440 / interval_minutes; }
    int regions() const { return rows * cols; }

    bool in_box(double lat, double lon) const;
    int row_of(double lat) const;
    int col_of(double lon) const;
    int region_index(int i, int j) const { return i * cols + j; }
    void region_of(int n, int& i, int& j) const;

    int64_t interval_of(int64_t timestamp_minutes) const;
    int64_t interval_start_minutes(int64_t t) const {
        return epoch_minutes + t * interval_minutes;
    }
    int day_of_week(int64_t t) const;  // 0 = Monday
    int time_of_day(int64_t t) const;  // 0 .. P_day-1
};

struct TripRecord {
    int64_t start_minutes = 0;
    int64_t end_minutes = 0;
    double start_lat = 0, start_lon = 0;
    double end_lat = 0, end_lon = 0;
};

// trips.csv schema:
//   start_time,end_time,start_lat,start_lon,end_lat,end_lon
// Malformed rows raise DataError naming the 1-based line number.
std::vector<TripRecord> read_trips_csv(const std::string& path);
void write_trips_csv(const std::string& path, const std::vector<TripRecord>& trips);

}  // namespace stsan
