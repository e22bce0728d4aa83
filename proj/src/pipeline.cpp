#include "stsan/pipeline.hpp"

#include "kernels.hpp"
#include "stsan/errors.hpp"

namespace stsan {

MinMaxStats fit_minmax(const double* values, int64_t count) {
    if (count <= 0) throw DataError("fit_minmax: no values");
    MinMaxStats s{values[0], values[0]};
    for (int64_t i = 1; i < count; ++i) {
        s.min = std::min(s.min, values[i]);
        s.max = std::max(s.max, values[i]);
    }
    return s;
}

MinMaxStats fit_minmax(const Array& values) { return fit_minmax(values.ptr(), values.numel()); }

Array apply_minmax(const Array& x, const MinMaxStats& stats) {
    Array out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = stats.apply(x.data[i]);
    return out;
}

Array invert_minmax(const Array& y, const MinMaxStats& stats) {
    Array out(y.shape);
    for (size_t i = 0; i < y.data.size(); ++i) out.data[i] = stats.invert(y.data[i]);
    return out;
}

void SamplingSpec::validate() const {
    if (days_back < 1) throw ConfigError("sampling days_back must be >= 1");
    if (per_day < 1 || per_day % 2 == 0)
        throw ConfigError("sampling per_day must be odd and >= 1, got " +
                          std::to_string(per_day));
}

bool history_available(int64_t t_pred, const SamplingSpec& spec, int p_day) {
    const int half = (spec.per_day - 1) / 2;
    return t_pred - static_cast<int64_t>(spec.days_back) * p_day - half >= 0 && t_pred >= 1;
}

std::vector<int64_t> sample_history(int64_t t_pred, const SamplingSpec& spec, int p_day) {
    spec.validate();
    if (!history_available(t_pred, spec, p_day))
        throw DataError("insufficient history before interval " + std::to_string(t_pred));
    const int half = (spec.per_day - 1) / 2;
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(spec.history_len()));
    for (int dd = spec.days_back; dd >= 1; --dd) {
        const int64_t base = t_pred - static_cast<int64_t>(dd) * p_day;
        for (int off = -half; off <= half; ++off) idx.push_back(base + off);
    }
    idx.push_back(t_pred - 1);
    for (size_t i = 1; i < idx.size(); ++i)
        if (idx[i] <= idx[i - 1])
            throw ConfigError("sampling windows overlap: per_day too wide for " +
                              std::to_string(p_day) + " intervals per day");
    return idx;
}

Array tailor(const Array& x, int focal_i, int focal_j, int block) {
    if (block < 1 || block % 2 == 0)
        throw ConfigError("tailoring block must be odd, got " + std::to_string(block));
    if (x.rank() < 2) throw ShapeError("tailor: input must have two leading spatial axes");
    Shape out_shape = x.shape;
    out_shape[0] = block;
    out_shape[1] = block;
    Array out(out_shape);
    detail::crop2d_forward(x, focal_i, focal_j, block, out);
    return out;
}

}  // namespace stsan
