#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stsan/array.hpp"

namespace stsan {

// Min-max scaling fitted on the training split only. Degenerate ranges
// (max <= min) map everything to 0 and invert back to min.
struct MinMaxStats {
    double min = 0.0;
    double max = 0.0;

    double apply(double x) const { return max > min ? (x - min) / (max - min) : 0.0; }
    double invert(double y) const { return max > min ? y * (max - min) + min : min; }
};

MinMaxStats fit_minmax(const double* values, int64_t count);
MinMaxStats fit_minmax(const Array& values);
Array apply_minmax(const Array& x, const MinMaxStats& stats);
Array invert_minmax(const Array& y, const MinMaxStats& stats);

// Periodic history sampling: n_p intervals centered on the same timestamp of
// each of the previous D days, plus the interval immediately before the
// target. |T| = D * n_p + 1.
struct SamplingSpec {
    int days_back = 7;    // D
    int per_day = 3;      // n_p, odd

    int history_len() const { return days_back * per_day + 1; }
    void validate() const;
};

bool history_available(int64_t t_pred, const SamplingSpec& spec, int p_day);

// Sampled interval indices, oldest first, strictly increasing, ending with
// t_pred - 1. Throws DataError when the history would reach before interval 0.
std::vector<int64_t> sample_history(int64_t t_pred, const SamplingSpec& spec, int p_day);

// B x B block centered on (focal_i, focal_j) over the first two axes;
// out-of-grid positions are zero-filled. B must be odd.
Array tailor(const Array& x, int focal_i, int focal_j, int block);

struct TimeDescriptor {
    int day_of_week = 0;  // 0 = Monday
    int time_of_day = 0;  // 0 .. P_day-1
    std::vector<double> externals;
};

// One training/evaluation unit, already normalized and tailored.
struct Sample {
    Array flow_block;   // Bf x Bf x |T| x w
    Array trans_block;  // B x B x |T| x w
    std::vector<TimeDescriptor> times;
    int focal_i = 0, focal_j = 0;
    int64_t t_pred = 0;
    std::array<double, 2> target_norm{};  // min-max scaled flows at t_pred
    std::array<double, 2> target_raw{};   // unnormalized, for metric filtering
};

struct SampleRef {
    int region = 0;
    int64_t t_pred = 0;
};

}  // namespace stsan
