#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "stsan/array.hpp"
#include "stsan/rng.hpp"

namespace stsan {

enum class InitKind {
    kZeros,
    kOnes,
    kFanUniform,  // uniform in [-l, l], l = sqrt(6 / (fan_in + fan_out))
};

// One learned weight: named, with a gradient accumulator of matching shape.
template <typename T>
struct ParamTensorT {
    std::string name;
    ArrayT<T> value;
    ArrayT<T> grad;
};

// All learned weights of a model, uniquely named, indexable by insertion
// order. The index is the contract between graphs and gradient buffers.
template <typename T>
class ParamStoreT {
public:
    int add(const std::string& name, Shape shape, InitKind init, Rng& rng,
            int64_t fan_in = 0, int64_t fan_out = 0);
    int add(const std::string& name, ArrayT<T> value);

    int index_of(const std::string& name) const;  // -1 if absent
    bool has(const std::string& name) const { return index_of(name) >= 0; }

    ParamTensorT<T>& at(int index) { return items_[static_cast<size_t>(index)]; }
    const ParamTensorT<T>& at(int index) const { return items_[static_cast<size_t>(index)]; }
    ParamTensorT<T>& at(const std::string& name);

    int size() const { return static_cast<int>(items_.size()); }
    int64_t total_elements() const;

    void zero_grads();
    std::vector<ArrayT<T>> make_grad_buffers() const;  // zeros, aligned by index

private:
    std::vector<ParamTensorT<T>> items_;
    std::unordered_map<std::string, int> by_name_;
};

template <typename T>
ArrayT<T> init_array(Shape shape, InitKind init, Rng& rng, int64_t fan_in, int64_t fan_out);

using ParamStore = ParamStoreT<double>;

}  // namespace stsan
