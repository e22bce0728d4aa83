#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stsan/errors.hpp"

namespace stsan {

// Dense row-major n-dimensional array, at most 5 axes.
inline constexpr int kMaxRank = 5;

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline void validate_shape(const Shape& s) {
    if (s.size() > kMaxRank)
        throw ShapeError("rank " + std::to_string(s.size()) + " exceeds max rank " +
                         std::to_string(kMaxRank));
    for (int64_t e : s)
        if (e < 1) throw ShapeError("non-positive extent in shape " + shape_str(s));
}

// Row-major strides, padded on the left to kMaxRank with extent-1 axes.
struct PaddedDims {
    std::array<int64_t, kMaxRank> dim{};
    std::array<int64_t, kMaxRank> stride{};

    explicit PaddedDims(const Shape& s) {
        const int off = kMaxRank - static_cast<int>(s.size());
        for (int i = 0; i < kMaxRank; ++i) dim[i] = 1;
        for (size_t i = 0; i < s.size(); ++i) dim[off + i] = s[i];
        stride[kMaxRank - 1] = 1;
        for (int i = kMaxRank - 2; i >= 0; --i) stride[i] = stride[i + 1] * dim[i + 1];
    }
};

template <typename T>
struct ArrayT {
    Shape shape;
    std::vector<T> data;

    ArrayT() = default;
    explicit ArrayT(Shape s, T fill = T(0)) : shape(std::move(s)) {
        validate_shape(shape);
        data.assign(static_cast<size_t>(shape_numel(shape)), fill);
    }
    ArrayT(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        validate_shape(shape);
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static ArrayT zeros(Shape s) { return ArrayT(std::move(s), T(0)); }
    static ArrayT full(Shape s, T v) { return ArrayT(std::move(s), v); }

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool same_shape(const ArrayT& o) const { return shape == o.shape; }

    int64_t extent(int axis) const { return shape[static_cast<size_t>(axis)]; }

    // Row-major offset of a multi-index; rank must match.
    template <typename... Ix>
    int64_t offset(Ix... ix) const {
        static_assert(sizeof...(Ix) > 0);
        const int64_t idx[] = {static_cast<int64_t>(ix)...};
        const int n = static_cast<int>(sizeof...(Ix));
        int64_t off = 0;
        for (int i = 0; i < n; ++i) off = off * shape[static_cast<size_t>(i)] + idx[i];
        return off;
    }

    template <typename... Ix>
    T& at(Ix... ix) {
        return data[static_cast<size_t>(offset(ix...))];
    }
    template <typename... Ix>
    const T& at(Ix... ix) const {
        return data[static_cast<size_t>(offset(ix...))];
    }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }
};

template <typename T>
bool all_finite(const ArrayT<T>& a) {
    for (T v : a.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

template <typename To, typename From>
ArrayT<To> cast_array(const ArrayT<From>& a) {
    ArrayT<To> out;
    out.shape = a.shape;
    out.data.resize(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = static_cast<To>(a.data[i]);
    return out;
}

using Array = ArrayT<double>;

}  // namespace stsan
