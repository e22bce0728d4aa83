#include "stsan/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stsan {

int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy =
        static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& year, int& month, int& day) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    year = static_cast<int>(y + (month <= 2));
}

int64_t parse_timestamp_minutes(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    char sep = 0;
    const int got =
        std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
    if (got < 6 || (sep != ' ' && sep != 'T'))
        throw DataError("bad timestamp: '" + text + "'");
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59)
        throw DataError("timestamp out of range: '" + text + "'");
    return days_from_civil(y, mo, d) * 1440 + h * 60 + mi;
}

std::string format_timestamp(int64_t minutes) {
    int64_t days = minutes / 1440;
    int64_t rem = minutes % 1440;
    if (rem < 0) {
        rem += 1440;
        days -= 1;
    }
    int y, mo, d;
    civil_from_days(days, y, mo, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:00", y, mo, d,
                  static_cast<int>(rem / 60), static_cast<int>(rem % 60));
    return buf;
}

void GridSpec::validate() const {
    if (rows < 1 || cols < 1) throw ConfigError("grid extents must be >= 1");
    if (interval_minutes < 1 || 1440 % interval_minutes != 0)
        throw ConfigError("interval_minutes must divide 1440, got " +
                          std::to_string(interval_minutes));
    if (!(lat_max > lat_min) || !(lon_max > lon_min))
        throw ConfigError("bounding box is empty");
}

bool GridSpec::in_box(double lat, double lon) const {
    return lat >= lat_min && lat < lat_max && lon >= lon_min && lon < lon_max;
}

int GridSpec::row_of(double lat) const {
    const double f = (lat - lat_min) / (lat_max - lat_min);
    int i = static_cast<int>(std::floor(f * rows));
    if (i < 0) i = 0;
    if (i >= rows) i = rows - 1;
    return i;
}

int GridSpec::col_of(double lon) const {
    const double f = (lon - lon_min) / (lon_max - lon_min);
    int j = static_cast<int>(std::floor(f * cols));
    if (j < 0) j = 0;
    if (j >= cols) j = cols - 1;
    return j;
}

void GridSpec::region_of(int n, int& i, int& j) const {
    i = n / cols;
    j = n % cols;
}

int64_t GridSpec::interval_of(int64_t timestamp_minutes) const {
    const int64_t delta = timestamp_minutes - epoch_minutes;
    return delta >= 0 ? delta / interval_minutes : (delta - interval_minutes + 1) / interval_minutes;
}

int GridSpec::day_of_week(int64_t t) const {
    const int64_t minutes = interval_start_minutes(t);
    int64_t days = minutes / 1440;
    if (minutes % 1440 < 0) days -= 1;
    // 1970-01-01 was a Thursday; Monday = 0.
    return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

int GridSpec::time_of_day(int64_t t) const {
    const int64_t minutes = interval_start_minutes(t);
    int64_t in_day = minutes % 1440;
    if (in_day < 0) in_day += 1440;
    return static_cast<int>(in_day / interval_minutes);
}

namespace {

double parse_double_field(const std::string& field, int line, const char* what) {
    try {
        size_t pos = 0;
        const double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line) + ": bad " + what + " '" + field + "'");
    }
}

}  // namespace

std::vector<TripRecord> read_trips_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open trips file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty trips file: " + path);
    std::vector<TripRecord> trips;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw DataError("line " + std::to_string(lineno) + ": expected 6 fields, got " +
                            std::to_string(fields.size()));
        TripRecord t;
        try {
            t.start_minutes = parse_timestamp_minutes(fields[0]);
            t.end_minutes = parse_timestamp_minutes(fields[1]);
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
        t.start_lat = parse_double_field(fields[2], lineno, "start_lat");
        t.start_lon = parse_double_field(fields[3], lineno, "start_lon");
        t.end_lat = parse_double_field(fields[4], lineno, "end_lat");
        t.end_lon = parse_double_field(fields[5], lineno, "end_lon");
        if (t.end_minutes < t.start_minutes)
            throw DataError("line " + std::to_string(lineno) + ": trip ends before it starts");
        trips.push_back(t);
    }
    return trips;
}

void write_trips_csv(const std::string& path, const std::vector<TripRecord>& trips) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "start_time,end_time,start_lat,start_lon,end_lat,end_lon\n";
    char buf[160];
    for (const auto& t : trips) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f\n",
                      format_timestamp(t.start_minutes).c_str(),
                      format_timestamp(t.end_minutes).c_str(), t.start_lat, t.start_lon,
                      t.end_lat, t.end_lon);
        os << buf;
    }
    if (!os) throw IoError("failed writing trips: " + path);
}

}  // namespace stsan
