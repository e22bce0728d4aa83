#include "stsan/params.hpp"

#include <cmath>

#include "stsan/errors.hpp"

namespace stsan {

template <typename T>
ArrayT<T> init_array(Shape shape, InitKind init, Rng& rng, int64_t fan_in, int64_t fan_out) {
    ArrayT<T> out(std::move(shape));
    switch (init) {
        case InitKind::kZeros:
            break;
        case InitKind::kOnes:
            for (auto& v : out.data) v = T(1);
            break;
        case InitKind::kFanUniform: {
            if (fan_in <= 0 || fan_out <= 0)
                throw ShapeError("fan-based init requires positive fan_in/fan_out");
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (auto& v : out.data) v = static_cast<T>(u(rng));
            break;
        }
    }
    return out;
}

template <typename T>
int ParamStoreT<T>::add(const std::string& name, Shape shape, InitKind init, Rng& rng,
                        int64_t fan_in, int64_t fan_out) {
    return add(name, init_array<T>(std::move(shape), init, rng, fan_in, fan_out));
}

template <typename T>
int ParamStoreT<T>::add(const std::string& name, ArrayT<T> value) {
    if (by_name_.count(name)) throw DataError("duplicate parameter name: " + name);
    ParamTensorT<T> p;
    p.name = name;
    p.grad = ArrayT<T>::zeros(value.shape);
    p.value = std::move(value);
    items_.push_back(std::move(p));
    const int idx = static_cast<int>(items_.size()) - 1;
    by_name_[name] = idx;
    return idx;
}

template <typename T>
int ParamStoreT<T>::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
}

template <typename T>
ParamTensorT<T>& ParamStoreT<T>::at(const std::string& name) {
    const int idx = index_of(name);
    if (idx < 0) throw DataError("unknown parameter: " + name);
    return items_[static_cast<size_t>(idx)];
}

template <typename T>
int64_t ParamStoreT<T>::total_elements() const {
    int64_t n = 0;
    for (const auto& p : items_) n += p.value.numel();
    return n;
}

template <typename T>
void ParamStoreT<T>::zero_grads() {
    for (auto& p : items_) std::fill(p.grad.data.begin(), p.grad.data.end(), T(0));
}

template <typename T>
std::vector<ArrayT<T>> ParamStoreT<T>::make_grad_buffers() const {
    std::vector<ArrayT<T>> bufs;
    bufs.reserve(items_.size());
    for (const auto& p : items_) bufs.push_back(ArrayT<T>::zeros(p.value.shape));
    return bufs;
}

template class ParamStoreT<float>;
template class ParamStoreT<double>;
template ArrayT<float> init_array<float>(Shape, InitKind, Rng&, int64_t, int64_t);
template ArrayT<double> init_array<double>(Shape, InitKind, Rng&, int64_t, int64_t);

}  // namespace stsan
