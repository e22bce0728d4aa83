#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stsan/config.hpp"
#include "stsan/flows.hpp"
#include "stsan/pipeline.hpp"

namespace stsan {

inline constexpr uint32_t kBundleVersion = 1;

// The ingested dataset: grid, flow history, the event table transitions are
// rebuilt from, normalization stats fitted on the training range, and the
// split/sampling description. Persisted as a directory with a JSON manifest
// plus raw little-endian arrays.
struct DatasetBundle {
    GridSpec grid;
    int64_t intervals = 0;
    int64_t train_end_interval = 0;
    double val_fraction = 0.2;
    SamplingSpec sampling;
    MinMaxStats flow_stats;
    MinMaxStats trans_stats;
    FlowTensor flows;
    EventTable events;
    int z = 0;                          // external feature count
    std::vector<std::string> ext_columns;
    std::vector<double> externals_raw;  // intervals * z, row-major
    std::vector<MinMaxStats> ext_stats;
    uint64_t seed = 0;
    int64_t trip_count = 0;

    double external_raw(int64_t t, int col) const {
        return externals_raw[static_cast<size_t>(t * z + col)];
    }
};

// Dataset config keys: grid.{rows,cols,lat_min,lat_max,lon_min,lon_max,
// interval_minutes,epoch}, data.days, split.train_days, split.val_fraction,
// sampling.{days_back,per_day}, externals.{file,columns}, seed.
DatasetBundle ingest_trips(const std::vector<TripRecord>& trips, const KvConfig& dataset_cfg);

void save_bundle(const std::string& dir, const DatasetBundle& bundle);
DatasetBundle load_bundle(const std::string& dir);

// Materializes Samples from a bundle: periodic history sampling, tailoring,
// normalization. When stream_f_global is set the flow block keeps the whole
// grid; the transition block is always tailored around the focal region.
class SampleFactory {
public:
    SampleFactory(const DatasetBundle& bundle, int block, bool stream_f_global = false);

    int history_len() const { return bundle_->sampling.history_len(); }
    int block() const { return block_; }
    bool can_sample(int64_t t_pred) const;
    Sample make(int region, int64_t t_pred) const;
    const DatasetBundle& bundle() const { return *bundle_; }

private:
    const DatasetBundle* bundle_;
    int block_;
    bool stream_f_global_;
    TransitionCache transitions_;
};

struct DatasetSplits {
    std::vector<SampleRef> train, val, test;
};

// One sample per (region, predictable interval); temporal train/test split
// at train_end_interval, then a seeded random val_fraction of train becomes
// validation.
DatasetSplits make_dataset(const DatasetBundle& bundle, uint64_t seed);

}  // namespace stsan
