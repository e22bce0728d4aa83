#include "stsan/bundle.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stsan/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stsan {

namespace {

GridSpec grid_from_config(const KvConfig& cfg) {
    GridSpec g;
    g.rows = static_cast<int>(cfg.get_int("grid.rows", 8));
    g.cols = static_cast<int>(cfg.get_int("grid.cols", 8));
    g.lat_min = cfg.get_double("grid.lat_min", 0.0);
    g.lat_max = cfg.get_double("grid.lat_max", 1.0);
    g.lon_min = cfg.get_double("grid.lon_min", 0.0);
    g.lon_max = cfg.get_double("grid.lon_max", 1.0);
    g.interval_minutes = static_cast<int>(cfg.get_int("grid.interval_minutes", 30));
    g.epoch_minutes = parse_timestamp_minutes(cfg.get_str("grid.epoch", "1970-01-01 00:00"));
    g.validate();
    return g;
}

// Largest transition-cell count over the training range: the multiplicity of
// (s_region, e_region, interval) triples among OD events, keyed per channel
// by the end (in) or start (out) interval.
double max_transition_count(const EventTable& events, int64_t train_end) {
    std::vector<uint64_t> keys;
    keys.reserve(events.od.size() * 2);
    auto pack = [](uint32_t a, uint32_t b, uint32_t t) {
        return (static_cast<uint64_t>(a) << 44) | (static_cast<uint64_t>(b) << 24) |
               static_cast<uint64_t>(t);
    };
    for (const auto& e : events.od) {
        if (e.e_interval < train_end)
            keys.push_back(pack(static_cast<uint32_t>(e.s_region),
                                static_cast<uint32_t>(e.e_region),
                                static_cast<uint32_t>(e.e_interval)) << 1);
        if (e.s_interval < train_end)
            keys.push_back((pack(static_cast<uint32_t>(e.s_region),
                                 static_cast<uint32_t>(e.e_region),
                                 static_cast<uint32_t>(e.s_interval)) << 1) | 1u);
    }
    if (keys.empty()) return 0.0;
    std::sort(keys.begin(), keys.end());
    uint64_t best = 1, run = 1;
    for (size_t i = 1; i < keys.size(); ++i) {
        run = keys[i] == keys[i - 1] ? run + 1 : 1;
        best = std::max(best, run);
    }
    return static_cast<double>(best);
}

void write_raw(const fs::path& path, const void* data, size_t bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!os) throw IoError("failed writing: " + path.string());
}

void read_raw(const fs::path& path, void* data, size_t bytes) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(bytes)))
        throw IoError("truncated file: " + path.string());
}

}  // namespace

DatasetBundle ingest_trips(const std::vector<TripRecord>& trips, const KvConfig& cfg) {
    DatasetBundle b;
    b.grid = grid_from_config(cfg);
    const int64_t days = cfg.get_int("data.days", 40);
    if (days < 1) throw ConfigError("data.days must be >= 1");
    b.intervals = days * b.grid.P_day();
    const int64_t train_days = cfg.get_int("split.train_days", std::max<int64_t>(1, days * 3 / 4));
    if (train_days < 1 || train_days > days)
        throw ConfigError("split.train_days must be in [1, data.days]");
    b.train_end_interval = train_days * b.grid.P_day();
    b.val_fraction = cfg.get_double("split.val_fraction", 0.2);
    if (b.val_fraction < 0.0 || b.val_fraction >= 1.0)
        throw ConfigError("split.val_fraction must be in [0,1)");
    b.sampling.days_back = static_cast<int>(cfg.get_int("sampling.days_back", 7));
    b.sampling.per_day = static_cast<int>(cfg.get_int("sampling.per_day", 3));
    b.sampling.validate();
    b.seed = static_cast<uint64_t>(cfg.get_int("seed", 7));

    b.events = extract_events(trips, b.grid, b.intervals);
    b.flows = flows_from_events(b.events, b.grid, b.intervals);
    b.trip_count = static_cast<int64_t>(trips.size());

    // stats over the training range only
    const int64_t cells_per_t = static_cast<int64_t>(b.grid.rows) * b.grid.cols * kFlowWidth;
    b.flow_stats = fit_minmax(b.flows.values.ptr(), b.train_end_interval * cells_per_t);
    // flows are laid out (i, j, t, c): the slice above is wrong; scan properly
    {
        MinMaxStats s{0.0, 0.0};
        bool first = true;
        for (int i = 0; i < b.grid.rows; ++i)
            for (int j = 0; j < b.grid.cols; ++j)
                for (int64_t t = 0; t < b.train_end_interval; ++t)
                    for (int c = 0; c < kFlowWidth; ++c) {
                        const double v = b.flows.at(i, j, t, c);
                        if (first) {
                            s.min = s.max = v;
                            first = false;
                        } else {
                            s.min = std::min(s.min, v);
                            s.max = std::max(s.max, v);
                        }
                    }
        b.flow_stats = s;
    }
    b.trans_stats = MinMaxStats{0.0, max_transition_count(b.events, b.train_end_interval)};

    // optional per-interval externals
    const std::string ext_file = cfg.get_str("externals.file", "");
    b.ext_columns = cfg.get_strings("externals.columns");
    if (!ext_file.empty()) {
        if (b.ext_columns.empty())
            throw ConfigError("externals.file given but externals.columns empty");
        b.z = static_cast<int>(b.ext_columns.size());
        b.externals_raw.assign(static_cast<size_t>(b.intervals * b.z), 0.0);
        std::ifstream is(ext_file);
        if (!is) throw IoError("cannot open externals file: " + ext_file);
        std::string line;
        if (!std::getline(is, line)) throw DataError("empty externals file: " + ext_file);
        std::vector<bool> seen(static_cast<size_t>(b.intervals), false);
        int lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string field;
            std::vector<std::string> fields;
            while (std::getline(ss, field, ',')) fields.push_back(field);
            if (static_cast<int>(fields.size()) != b.z + 1)
                throw DataError("externals line " + std::to_string(lineno) + ": expected " +
                                std::to_string(b.z + 1) + " fields");
            const int64_t t = b.grid.interval_of(parse_timestamp_minutes(fields[0]));
            if (t < 0 || t >= b.intervals) continue;
            for (int c = 0; c < b.z; ++c)
                b.externals_raw[static_cast<size_t>(t * b.z + c)] =
                    std::stod(fields[static_cast<size_t>(c + 1)]);
            seen[static_cast<size_t>(t)] = true;
        }
        for (int64_t t = 0; t < b.intervals; ++t)
            if (!seen[static_cast<size_t>(t)])
                throw DataError("externals file missing interval " + std::to_string(t));
        b.ext_stats.resize(static_cast<size_t>(b.z));
        for (int c = 0; c < b.z; ++c) {
            MinMaxStats s{b.external_raw(0, c), b.external_raw(0, c)};
            for (int64_t t = 1; t < b.train_end_interval; ++t) {
                s.min = std::min(s.min, b.external_raw(t, c));
                s.max = std::max(s.max, b.external_raw(t, c));
            }
            b.ext_stats[static_cast<size_t>(c)] = s;
        }
    }
    return b;
}

void save_bundle(const std::string& dir, const DatasetBundle& b) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create bundle directory: " + dir);

    json manifest;
    manifest["format_version"] = kBundleVersion;
    manifest["grid"] = {{"rows", b.grid.rows},
                        {"cols", b.grid.cols},
                        {"lat_min", b.grid.lat_min},
                        {"lat_max", b.grid.lat_max},
                        {"lon_min", b.grid.lon_min},
                        {"lon_max", b.grid.lon_max},
                        {"interval_minutes", b.grid.interval_minutes},
                        {"epoch_minutes", b.grid.epoch_minutes}};
    manifest["intervals"] = b.intervals;
    manifest["train_end_interval"] = b.train_end_interval;
    manifest["val_fraction"] = b.val_fraction;
    manifest["sampling"] = {{"days_back", b.sampling.days_back}, {"per_day", b.sampling.per_day}};
    manifest["stats"] = {
        {"flows", {{"min", b.flow_stats.min}, {"max", b.flow_stats.max}}},
        {"transitions", {{"min", b.trans_stats.min}, {"max", b.trans_stats.max}}}};
    json ext_stats = json::array();
    for (const auto& s : b.ext_stats) ext_stats.push_back({{"min", s.min}, {"max", s.max}});
    manifest["externals"] = {{"z", b.z}, {"columns", b.ext_columns}, {"stats", ext_stats}};
    manifest["events"] = {{"od", b.events.od.size()},
                          {"partial", b.events.partial.size()},
                          {"skipped", b.events.skipped}};
    manifest["trips"] = b.trip_count;
    manifest["seed"] = b.seed;
    {
        std::ofstream os(fs::path(dir) / "manifest.json");
        if (!os) throw IoError("cannot write manifest in " + dir);
        os << manifest.dump(2) << "\n";
    }

    std::vector<float> flows32(b.flows.values.data.size());
    for (size_t i = 0; i < flows32.size(); ++i)
        flows32[i] = static_cast<float>(b.flows.values.data[i]);
    write_raw(fs::path(dir) / "flows.f32", flows32.data(), flows32.size() * sizeof(float));

    static_assert(sizeof(OdEvent) == 16);
    write_raw(fs::path(dir) / "od_events.bin", b.events.od.data(),
              b.events.od.size() * sizeof(OdEvent));
    std::vector<int32_t> partial;
    partial.reserve(b.events.partial.size() * 3);
    for (const auto& p : b.events.partial) {
        partial.push_back(p.region);
        partial.push_back(p.interval);
        partial.push_back(p.channel);
    }
    write_raw(fs::path(dir) / "partial_events.bin", partial.data(),
              partial.size() * sizeof(int32_t));
    if (b.z > 0)
        write_raw(fs::path(dir) / "externals.f64", b.externals_raw.data(),
                  b.externals_raw.size() * sizeof(double));
}

DatasetBundle load_bundle(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream is(root / "manifest.json");
    if (!is) throw IoError("not a dataset bundle (no manifest.json): " + dir);
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw DataError("bad manifest in " + dir + ": " + e.what());
    }
    if (manifest.value("format_version", 0u) != kBundleVersion)
        throw DataError("unsupported bundle version in " + dir);

    DatasetBundle b;
    const auto& g = manifest.at("grid");
    b.grid.rows = g.at("rows");
    b.grid.cols = g.at("cols");
    b.grid.lat_min = g.at("lat_min");
    b.grid.lat_max = g.at("lat_max");
    b.grid.lon_min = g.at("lon_min");
    b.grid.lon_max = g.at("lon_max");
    b.grid.interval_minutes = g.at("interval_minutes");
    b.grid.epoch_minutes = g.at("epoch_minutes");
    b.grid.validate();
    b.intervals = manifest.at("intervals");
    b.train_end_interval = manifest.at("train_end_interval");
    b.val_fraction = manifest.at("val_fraction");
    b.sampling.days_back = manifest.at("sampling").at("days_back");
    b.sampling.per_day = manifest.at("sampling").at("per_day");
    b.flow_stats.min = manifest.at("stats").at("flows").at("min");
    b.flow_stats.max = manifest.at("stats").at("flows").at("max");
    b.trans_stats.min = manifest.at("stats").at("transitions").at("min");
    b.trans_stats.max = manifest.at("stats").at("transitions").at("max");
    b.z = manifest.at("externals").at("z");
    b.ext_columns = manifest.at("externals").at("columns").get<std::vector<std::string>>();
    for (const auto& s : manifest.at("externals").at("stats"))
        b.ext_stats.push_back(MinMaxStats{s.at("min"), s.at("max")});
    b.trip_count = manifest.at("trips");
    b.seed = manifest.at("seed");

    const int64_t flow_count =
        static_cast<int64_t>(b.grid.rows) * b.grid.cols * b.intervals * kFlowWidth;
    std::vector<float> flows32(static_cast<size_t>(flow_count));
    read_raw(root / "flows.f32", flows32.data(), flows32.size() * sizeof(float));
    b.flows.grid = b.grid;
    b.flows.intervals = b.intervals;
    b.flows.values = Array({b.grid.rows, b.grid.cols, b.intervals, kFlowWidth});
    for (size_t i = 0; i < flows32.size(); ++i)
        b.flows.values.data[i] = static_cast<double>(flows32[i]);

    const size_t od_count = manifest.at("events").at("od");
    b.events.od.resize(od_count);
    if (od_count > 0)
        read_raw(root / "od_events.bin", b.events.od.data(), od_count * sizeof(OdEvent));
    const size_t partial_count = manifest.at("events").at("partial");
    std::vector<int32_t> partial(partial_count * 3);
    if (partial_count > 0)
        read_raw(root / "partial_events.bin", partial.data(), partial.size() * sizeof(int32_t));
    for (size_t i = 0; i < partial_count; ++i)
        b.events.partial.push_back({partial[3 * i], partial[3 * i + 1],
                                    static_cast<uint8_t>(partial[3 * i + 2])});
    b.events.skipped = manifest.at("events").at("skipped");

    if (b.z > 0) {
        b.externals_raw.resize(static_cast<size_t>(b.intervals * b.z));
        read_raw(root / "externals.f64", b.externals_raw.data(),
                 b.externals_raw.size() * sizeof(double));
    }
    return b;
}

SampleFactory::SampleFactory(const DatasetBundle& bundle, int block, bool stream_f_global)
    : bundle_(&bundle),
      block_(block),
      stream_f_global_(stream_f_global),
      transitions_(bundle.events, bundle.grid, bundle.intervals) {
    if (block < 1 || block % 2 == 0)
        throw ConfigError("block size must be odd, got " + std::to_string(block));
}

bool SampleFactory::can_sample(int64_t t_pred) const {
    return t_pred < bundle_->intervals &&
           history_available(t_pred, bundle_->sampling, bundle_->grid.P_day());
}

Sample SampleFactory::make(int region, int64_t t_pred) const {
    const DatasetBundle& b = *bundle_;
    const auto idx = sample_history(t_pred, b.sampling, b.grid.P_day());
    const int T = static_cast<int>(idx.size());
    Sample s;
    b.grid.region_of(region, s.focal_i, s.focal_j);
    s.t_pred = t_pred;

    // flow block, tailored or global
    auto gather = [&](const Array& src, const MinMaxStats& stats, int rows, int cols,
                      int base_i, int base_j) {
        Array block({rows, cols, T, kFlowWidth});
        for (int bi = 0; bi < rows; ++bi)
            for (int bj = 0; bj < cols; ++bj) {
                const int si = base_i + bi, sj = base_j + bj;
                const bool inside =
                    si >= 0 && si < b.grid.rows && sj >= 0 && sj < b.grid.cols;
                for (int ti = 0; ti < T; ++ti)
                    for (int c = 0; c < kFlowWidth; ++c)
                        block.at(bi, bj, ti, c) =
                            inside ? stats.apply(src.at(si, sj, idx[static_cast<size_t>(ti)], c))
                                   : 0.0;
            }
        return block;
    };

    const int half = (block_ - 1) / 2;
    if (stream_f_global_) {
        s.flow_block = gather(b.flows.values, b.flow_stats, b.grid.rows, b.grid.cols, 0, 0);
    } else {
        s.flow_block = gather(b.flows.values, b.flow_stats, block_, block_, s.focal_i - half,
                              s.focal_j - half);
    }
    const Array& trans = transitions_.get(s.focal_i, s.focal_j);
    s.trans_block =
        gather(trans, b.trans_stats, block_, block_, s.focal_i - half, s.focal_j - half);

    s.times.resize(static_cast<size_t>(T));
    for (int ti = 0; ti < T; ++ti) {
        TimeDescriptor& td = s.times[static_cast<size_t>(ti)];
        td.day_of_week = b.grid.day_of_week(idx[static_cast<size_t>(ti)]);
        td.time_of_day = b.grid.time_of_day(idx[static_cast<size_t>(ti)]);
        for (int c = 0; c < b.z; ++c)
            td.externals.push_back(b.ext_stats[static_cast<size_t>(c)].apply(
                b.external_raw(idx[static_cast<size_t>(ti)], c)));
    }

    for (int c = 0; c < kFlowWidth; ++c) {
        const double raw = b.flows.at(s.focal_i, s.focal_j, t_pred, c);
        s.target_raw[static_cast<size_t>(c)] = raw;
        s.target_norm[static_cast<size_t>(c)] = b.flow_stats.apply(raw);
    }
    return s;
}

DatasetSplits make_dataset(const DatasetBundle& b, uint64_t seed) {
    DatasetSplits splits;
    std::vector<SampleRef> train_pool;
    const int regions = b.grid.regions();
    for (int64_t t = 0; t < b.intervals; ++t) {
        if (!history_available(t, b.sampling, b.grid.P_day())) continue;
        for (int r = 0; r < regions; ++r) {
            if (t < b.train_end_interval)
                train_pool.push_back({r, t});
            else
                splits.test.push_back({r, t});
        }
    }
    if (train_pool.empty()) throw DataError("empty training split");
    Rng rng = make_rng(seed, 303);
    std::shuffle(train_pool.begin(), train_pool.end(), rng);
    const size_t val_count =
        static_cast<size_t>(b.val_fraction * static_cast<double>(train_pool.size()));
    splits.val.assign(train_pool.begin(), train_pool.begin() + static_cast<long>(val_count));
    splits.train.assign(train_pool.begin() + static_cast<long>(val_count), train_pool.end());
    if (splits.train.empty()) throw DataError("empty training split after validation carve-out");
    auto by_ref = [](const SampleRef& a, const SampleRef& b2) {
        return a.t_pred != b2.t_pred ? a.t_pred < b2.t_pred : a.region < b2.region;
    };
    std::sort(splits.val.begin(), splits.val.end(), by_ref);
    std::sort(splits.train.begin(), splits.train.end(), by_ref);
    return splits;
}

}  // namespace stsan
