#include "stsan/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "kernels.hpp"
#include "stsan/rng.hpp"

namespace stsan {

const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::kInput: return "input";
        case OpKind::kParam: return "param";
        case OpKind::kAdd: return "add";
        case OpKind::kMul: return "mul";
        case OpKind::kScale: return "scale";
        case OpKind::kRelu: return "relu";
        case OpKind::kTanh: return "tanh";
        case OpKind::kSigmoid: return "sigmoid";
        case OpKind::kLinear: return "linear";
        case OpKind::kBmm: return "bmm";
        case OpKind::kConv2d: return "conv2d";
        case OpKind::kSoftmax: return "softmax";
        case OpKind::kLayerNorm: return "layer_norm";
        case OpKind::kDropout: return "dropout";
        case OpKind::kTranspose: return "transpose";
        case OpKind::kReshape: return "reshape";
        case OpKind::kSlice: return "slice";
        case OpKind::kConcat: return "concat";
        case OpKind::kCrop2d: return "crop2d";
        case OpKind::kSumAll: return "sum_all";
    }
    return "?";
}

template <typename T>
struct GraphT<T>::Node {
    OpKind op;
    std::array<int32_t, 3> in{{-1, -1, -1}};
    std::vector<int32_t> extra_in;      // concat inputs beyond the first three
    ArrayT<T> value;
    ArrayT<T> grad;                      // empty until backward touches it
    std::vector<int64_t> iargs;          // axes / perm / slice bounds / flags
    T scalar{};                          // scale factor, eps, or dropout rate
    ArrayT<T> aux;                       // dropout mask or layer-norm row cache
    int32_t param_index = -1;

    std::vector<int32_t> inputs() const {
        std::vector<int32_t> all;
        for (int32_t i : in)
            if (i >= 0) all.push_back(i);
        all.insert(all.end(), extra_in.begin(), extra_in.end());
        return all;
    }
};

template <typename T>
GraphT<T>::GraphT(GraphOptions opts) : opts_(opts) {}

template <typename T>
GraphT<T>::~GraphT() = default;

template <typename T>
void GraphT<T>::check_var(Var v, const char* ctx) const {
    if (!v.valid() || v.id >= static_cast<int32_t>(nodes_.size()))
        throw ShapeError(std::string(ctx) + ": invalid graph handle");
}

template <typename T>
Var GraphT<T>::push(Node node) {
    nodes_.push_back(std::move(node));
    const int32_t id = static_cast<int32_t>(nodes_.size()) - 1;
    run_forward(id);
    if (opts_.check_finite && !all_finite(nodes_[static_cast<size_t>(id)].value))
        throw NumericError(std::string("non-finite values at op ") +
                           op_name(nodes_[static_cast<size_t>(id)].op));
    return Var{id};
}

template <typename T>
Var GraphT<T>::input(ArrayT<T> value) {
    Node n;
    n.op = OpKind::kInput;
    n.value = std::move(value);
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::param(ArrayT<T> value, int param_index) {
    Node n;
    n.op = OpKind::kParam;
    n.value = std::move(value);
    n.param_index = param_index;
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::add(Var a, Var b) {
    check_var(a, "add");
    check_var(b, "add");
    Node n;
    n.op = OpKind::kAdd;
    n.in = {a.id, b.id, -1};
    n.value = ArrayT<T>(detail::broadcast_shape(shape(a), shape(b)));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::sub(Var a, Var b) {
    return add(a, scale(b, T(-1)));
}

template <typename T>
Var GraphT<T>::mul(Var a, Var b) {
    check_var(a, "mul");
    check_var(b, "mul");
    if (shape(a) != shape(b))
        throw ShapeError("mul: shape mismatch " + shape_str(shape(a)) + " vs " +
                         shape_str(shape(b)));
    Node n;
    n.op = OpKind::kMul;
    n.in = {a.id, b.id, -1};
    n.value = ArrayT<T>(shape(a));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::scale(Var x, T factor) {
    check_var(x, "scale");
    Node n;
    n.op = OpKind::kScale;
    n.in = {x.id, -1, -1};
    n.scalar = factor;
    n.value = ArrayT<T>(shape(x));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::relu(Var x) {
    check_var(x, "relu");
    Node n;
    n.op = OpKind::kRelu;
    n.in = {x.id, -1, -1};
    n.value = ArrayT<T>(shape(x));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::tanh(Var x) {
    check_var(x, "tanh");
    Node n;
    n.op = OpKind::kTanh;
    n.in = {x.id, -1, -1};
    n.value = ArrayT<T>(shape(x));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::sigmoid(Var x) {
    check_var(x, "sigmoid");
    Node n;
    n.op = OpKind::kSigmoid;
    n.in = {x.id, -1, -1};
    n.value = ArrayT<T>(shape(x));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::linear(Var x, Var w) {
    check_var(x, "linear");
    check_var(w, "linear");
    const Shape& xs = shape(x);
    const Shape& ws = shape(w);
    if (ws.size() != 2)
        throw ShapeError("linear: weight must be rank 2, got " + shape_str(ws));
    if (xs.empty() || xs.back() != ws[0])
        throw ShapeError("linear: input " + shape_str(xs) + " incompatible with weight " +
                         shape_str(ws));
    Shape out = xs;
    out.back() = ws[1];
    Node n;
    n.op = OpKind::kLinear;
    n.in = {x.id, w.id, -1};
    n.value = ArrayT<T>(std::move(out));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::bmm(Var a, Var b, bool transpose_b) {
    check_var(a, "bmm");
    check_var(b, "bmm");
    const Shape& as = shape(a);
    const Shape& bs = shape(b);
    if (as.size() != bs.size() || as.size() < 2)
        throw ShapeError("bmm: rank mismatch " + shape_str(as) + " vs " + shape_str(bs));
    for (size_t i = 0; i + 2 < as.size(); ++i)
        if (as[i] != bs[i])
            throw ShapeError("bmm: batch extents differ " + shape_str(as) + " vs " +
                             shape_str(bs));
    const size_t r = as.size();
    const int64_t k = as[r - 1];
    const int64_t bk = transpose_b ? bs[r - 1] : bs[r - 2];
    if (k != bk)
        throw ShapeError("bmm: inner extents differ " + shape_str(as) + " vs " + shape_str(bs));
    Shape out = as;
    out[r - 1] = transpose_b ? bs[r - 2] : bs[r - 1];
    Node n;
    n.op = OpKind::kBmm;
    n.in = {a.id, b.id, -1};
    n.iargs = {transpose_b ? 1 : 0};
    n.value = ArrayT<T>(std::move(out));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::conv2d(Var x, Var kernel, Var bias) {
    check_var(x, "conv2d");
    check_var(kernel, "conv2d");
    check_var(bias, "conv2d");
    const Shape& xs = shape(x);
    const Shape& ks = shape(kernel);
    const Shape& bs = shape(bias);
    if (xs.size() != 3) throw ShapeError("conv2d: input must be [H,W,C], got " + shape_str(xs));
    if (ks.size() != 4)
        throw ShapeError("conv2d: kernel must be [k,k,Cin,Cout], got " + shape_str(ks));
    if (ks[0] != ks[1] || ks[0] % 2 == 0)
        throw ShapeError("conv2d: kernel must be square with odd extent, got " + shape_str(ks));
    if (ks[2] != xs[2])
        throw ShapeError("conv2d: channel mismatch, input " + shape_str(xs) + " kernel " +
                         shape_str(ks));
    if (bs.size() != 1 || bs[0] != ks[3])
        throw ShapeError("conv2d: bias must be [Cout], got " + shape_str(bs));
    Node n;
    n.op = OpKind::kConv2d;
    n.in = {x.id, kernel.id, bias.id};
    n.value = ArrayT<T>({xs[0], xs[1], ks[3]});
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::softmax(Var x, const std::vector<int>& axes) {
    check_var(x, "softmax");
    const Shape& xs = shape(x);
    if (axes.empty()) throw ShapeError("softmax: empty axis set");
    std::vector<int> sorted(axes);
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) {
        if (sorted[i] < 0 || sorted[i] >= static_cast<int>(xs.size()))
            throw ShapeError("softmax: axis " + std::to_string(sorted[i]) + " invalid for " +
                             shape_str(xs));
        if (i > 0 && sorted[i] == sorted[i - 1])
            throw ShapeError("softmax: duplicate axis " + std::to_string(sorted[i]));
    }
    Node n;
    n.op = OpKind::kSoftmax;
    n.in = {x.id, -1, -1};
    for (int a : sorted) n.iargs.push_back(a);
    n.value = ArrayT<T>(xs);
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::layer_norm(Var x, Var gain, Var bias, T eps) {
    check_var(x, "layer_norm");
    check_var(gain, "layer_norm");
    check_var(bias, "layer_norm");
    const Shape& xs = shape(x);
    const int64_t d = xs.back();
    if (shape(gain) != Shape{d} || shape(bias) != Shape{d})
        throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
    if (!(eps >= T(0))) throw ShapeError("layer_norm: eps must be >= 0");
    Node n;
    n.op = OpKind::kLayerNorm;
    n.in = {x.id, gain.id, bias.id};
    n.scalar = eps;
    n.value = ArrayT<T>(xs);
    n.aux = ArrayT<T>({2 * (shape_numel(xs) / d)});
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::dropout(Var x, T rate) {
    check_var(x, "dropout");
    if (!(rate >= T(0) && rate < T(1))) throw ShapeError("dropout: rate must be in [0,1)");
    if (!opts_.training || rate == T(0)) return x;  // identity at evaluation time
    Node n;
    n.op = OpKind::kDropout;
    n.in = {x.id, -1, -1};
    n.scalar = rate;
    n.aux = ArrayT<T>(shape(x));
    Rng rng = make_rng(opts_.dropout_seed, static_cast<uint64_t>(nodes_.size()));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const T keep_scale = T(1) / (T(1) - rate);
    for (auto& m : n.aux.data) m = (u(rng) < static_cast<double>(rate)) ? T(0) : keep_scale;
    n.value = ArrayT<T>(shape(x));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::transpose(Var x, const std::vector<int>& perm) {
    check_var(x, "transpose");
    const Shape& xs = shape(x);
    const int r = static_cast<int>(xs.size());
    if (static_cast<int>(perm.size()) != r)
        throw ShapeError("transpose: perm size must equal rank " + std::to_string(r));
    std::vector<bool> seen(static_cast<size_t>(r), false);
    for (int p : perm) {
        if (p < 0 || p >= r || seen[static_cast<size_t>(p)])
            throw ShapeError("transpose: perm is not a permutation");
        seen[static_cast<size_t>(p)] = true;
    }
    Shape out(static_cast<size_t>(r));
    for (int j = 0; j < r; ++j)
        out[static_cast<size_t>(j)] = xs[static_cast<size_t>(perm[static_cast<size_t>(j)])];
    Node n;
    n.op = OpKind::kTranspose;
    n.in = {x.id, -1, -1};
    for (int p : perm) n.iargs.push_back(p);
    n.value = ArrayT<T>(std::move(out));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::reshape(Var x, Shape new_shape) {
    check_var(x, "reshape");
    validate_shape(new_shape);
    if (shape_numel(new_shape) != shape_numel(shape(x)))
        throw ShapeError("reshape: cannot reshape " + shape_str(shape(x)) + " to " +
                         shape_str(new_shape));
    Node n;
    n.op = OpKind::kReshape;
    n.in = {x.id, -1, -1};
    n.value = ArrayT<T>(std::move(new_shape));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::slice(Var x, int axis, int64_t start, int64_t len) {
    check_var(x, "slice");
    const Shape& xs = shape(x);
    if (axis < 0 || axis >= static_cast<int>(xs.size()))
        throw ShapeError("slice: axis " + std::to_string(axis) + " invalid for " + shape_str(xs));
    if (start < 0 || len < 1 || start + len > xs[static_cast<size_t>(axis)])
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") invalid for " + shape_str(xs));
    Shape out = xs;
    out[static_cast<size_t>(axis)] = len;
    Node n;
    n.op = OpKind::kSlice;
    n.in = {x.id, -1, -1};
    n.iargs = {axis, start, len};
    n.value = ArrayT<T>(std::move(out));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    for (Var v : xs) check_var(v, "concat");
    const Shape& first = shape(xs[0]);
    if (axis < 0 || axis >= static_cast<int>(first.size()))
        throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for " +
                         shape_str(first));
    int64_t total = 0;
    for (Var v : xs) {
        const Shape& s = shape(v);
        if (s.size() != first.size())
            throw ShapeError("concat: rank mismatch " + shape_str(s) + " vs " + shape_str(first));
        for (size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis && s[i] != first[i])
                throw ShapeError("concat: extent mismatch " + shape_str(s) + " vs " +
                                 shape_str(first));
        total += s[static_cast<size_t>(axis)];
    }
    Shape out = first;
    out[static_cast<size_t>(axis)] = total;
    Node n;
    n.op = OpKind::kConcat;
    n.in = {xs[0].id, -1, -1};
    for (size_t i = 1; i < xs.size(); ++i) n.extra_in.push_back(xs[i].id);
    n.iargs = {axis};
    n.value = ArrayT<T>(std::move(out));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::crop2d(Var x, int64_t center_i, int64_t center_j, int64_t size) {
    check_var(x, "crop2d");
    const Shape& xs = shape(x);
    if (xs.size() < 2) throw ShapeError("crop2d: input must have two leading spatial axes");
    if (size < 1 || size % 2 == 0) throw ShapeError("crop2d: window must be odd-sized");
    Shape out = xs;
    out[0] = size;
    out[1] = size;
    Node n;
    n.op = OpKind::kCrop2d;
    n.in = {x.id, -1, -1};
    n.iargs = {center_i, center_j, size};
    n.value = ArrayT<T>(std::move(out));
    return push(std::move(n));
}

template <typename T>
Var GraphT<T>::sum_all(Var x) {
    check_var(x, "sum_all");
    Node n;
    n.op = OpKind::kSumAll;
    n.in = {x.id, -1, -1};
    n.value = ArrayT<T>({1});
    return push(std::move(n));
}

template <typename T>
const ArrayT<T>& GraphT<T>::value(Var v) const {
    check_var(v, "value");
    return nodes_[static_cast<size_t>(v.id)].value;
}

template <typename T>
const Shape& GraphT<T>::shape(Var v) const {
    check_var(v, "shape");
    return nodes_[static_cast<size_t>(v.id)].value.shape;
}

template <typename T>
const ArrayT<T>& GraphT<T>::grad(Var v) const {
    check_var(v, "grad");
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    if (n.grad.numel() == 0) {
        static thread_local ArrayT<T> zeros;
        zeros = ArrayT<T>::zeros(n.value.shape);
        return zeros;
    }
    return n.grad;
}

template <typename T>
int64_t GraphT<T>::node_count() const {
    return static_cast<int64_t>(nodes_.size());
}

template <typename T>
ArrayT<T>& GraphT<T>::grad_buffer(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0) n.grad = ArrayT<T>::zeros(n.value.shape);
    return n.grad;
}

template <typename T>
void GraphT<T>::run_forward(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    auto val = [&](int slot) -> const ArrayT<T>& {
        return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])].value;
    };
    switch (n.op) {
        case OpKind::kInput:
        case OpKind::kParam:
            break;
        case OpKind::kAdd:
            detail::add_broadcast_forward(val(0), val(1), n.value);
            break;
        case OpKind::kMul: {
            const T* a = val(0).ptr();
            const T* b = val(1).ptr();
            T* o = n.value.ptr();
            const int64_t cnt = n.value.numel();
            for (int64_t i = 0; i < cnt; ++i) o[i] = a[i] * b[i];
            break;
        }
        case OpKind::kScale: {
            const T* a = val(0).ptr();
            T* o = n.value.ptr();
            const int64_t cnt = n.value.numel();
            for (int64_t i = 0; i < cnt; ++i) o[i] = n.scalar * a[i];
            break;
        }
        case OpKind::kRelu: {
            const T* a = val(0).ptr();
            T* o = n.value.ptr();
            const int64_t cnt = n.value.numel();
            for (int64_t i = 0; i < cnt; ++i) o[i] = a[i] > T(0) ? a[i] : T(0);
            break;
        }
        case OpKind::kTanh: {
            const T* a = val(0).ptr();
            T* o = n.value.ptr();
            const int64_t cnt = n.value.numel();
            for (int64_t i = 0; i < cnt; ++i) o[i] = std::tanh(a[i]);
            break;
        }
        case OpKind::kSigmoid: {
            const T* a = val(0).ptr();
            T* o = n.value.ptr();
            const int64_t cnt = n.value.numel();
            for (int64_t i = 0; i < cnt; ++i) {
                const T x = a[i];
                if (x >= T(0)) {
                    o[i] = T(1) / (T(1) + std::exp(-x));
                } else {
                    const T e = std::exp(x);
                    o[i] = e / (T(1) + e);
                }
            }
            break;
        }
        case OpKind::kLinear:
            detail::linear_forward(val(0), val(1), n.value);
            break;
        case OpKind::kBmm:
            detail::bmm_forward(val(0), val(1), n.iargs[0] != 0, n.value);
            break;
        case OpKind::kConv2d:
            detail::conv2d_forward(val(0), val(1), val(2), n.value);
            break;
        case OpKind::kSoftmax: {
            std::vector<int> axes(n.iargs.begin(), n.iargs.end());
            detail::softmax_forward(val(0), axes, n.value);
            break;
        }
        case OpKind::kLayerNorm:
            detail::layer_norm_forward(val(0), val(1), val(2), n.scalar, n.value, n.aux);
            break;
        case OpKind::kDropout: {
            const T* a = val(0).ptr();
            const T* m = n.aux.ptr();
            T* o = n.value.ptr();
            const int64_t cnt = n.value.numel();
            for (int64_t i = 0; i < cnt; ++i) o[i] = a[i] * m[i];
            break;
        }
        case OpKind::kTranspose: {
            std::vector<int> perm(n.iargs.begin(), n.iargs.end());
            detail::transpose_apply(val(0), perm, n.value.ptr(), false);
            break;
        }
        case OpKind::kReshape:
            n.value.data = val(0).data;
            break;
        case OpKind::kSlice:
            detail::slice_forward(val(0), static_cast<int>(n.iargs[0]), n.iargs[1], n.iargs[2],
                                  n.value);
            break;
        case OpKind::kConcat: {
            const int axis = static_cast<int>(n.iargs[0]);
            const Shape& os = n.value.shape;
            int64_t outer = 1, block = 1;
            for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
            for (size_t i = static_cast<size_t>(axis) + 1; i < os.size(); ++i) block *= os[i];
            const int64_t dim_total = os[static_cast<size_t>(axis)];
            int64_t off = 0;
            std::vector<int32_t> all = n.inputs();
            for (int32_t src_id : all) {
                const ArrayT<T>& piece = nodes_[static_cast<size_t>(src_id)].value;
                const int64_t len = piece.shape[static_cast<size_t>(axis)];
                for (int64_t o = 0; o < outer; ++o)
                    std::memcpy(n.value.ptr() + (o * dim_total + off) * block,
                                piece.ptr() + o * len * block,
                                static_cast<size_t>(len * block) * sizeof(T));
                off += len;
            }
            break;
        }
        case OpKind::kCrop2d:
            detail::crop2d_forward(val(0), n.iargs[0], n.iargs[1], n.iargs[2], n.value);
            break;
        case OpKind::kSumAll: {
            const T* a = val(0).ptr();
            T s = T(0);
            const int64_t cnt = val(0).numel();
            for (int64_t i = 0; i < cnt; ++i) s += a[i];
            n.value.data[0] = s;
            break;
        }
    }
}

template <typename T>
void GraphT<T>::run_backward(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    const ArrayT<T>& g = n.grad;
    auto val = [&](int slot) -> const ArrayT<T>& {
        return nodes_[static_cast<size_t>(n.in[static_cast<size_t>(slot)])].value;
    };
    auto gbuf = [&](int slot) -> ArrayT<T>& { return grad_buffer(n.in[static_cast<size_t>(slot)]); };
    switch (n.op) {
        case OpKind::kInput:
        case OpKind::kParam:
            break;
        case OpKind::kAdd:
            detail::reduce_into_shape(g, gbuf(0));
            detail::reduce_into_shape(g, gbuf(1));
            break;
        case OpKind::kMul: {
            ArrayT<T>& da = gbuf(0);
            ArrayT<T>& db = gbuf(1);
            const T* a = val(0).ptr();
            const T* b = val(1).ptr();
            const T* pg = g.ptr();
            const int64_t cnt = g.numel();
            for (int64_t i = 0; i < cnt; ++i) {
                da.data[static_cast<size_t>(i)] += pg[i] * b[i];
                db.data[static_cast<size_t>(i)] += pg[i] * a[i];
            }
            break;
        }
        case OpKind::kScale:
            detail::axpy(g.numel(), n.scalar, g.ptr(), gbuf(0).ptr());
            break;
        case OpKind::kRelu: {
            ArrayT<T>& dx = gbuf(0);
            const T* x = val(0).ptr();
            const T* pg = g.ptr();
            const int64_t cnt = g.numel();
            for (int64_t i = 0; i < cnt; ++i)
                if (x[i] > T(0)) dx.data[static_cast<size_t>(i)] += pg[i];
            break;
        }
        case OpKind::kTanh: {
            ArrayT<T>& dx = gbuf(0);
            const T* y = n.value.ptr();
            const T* pg = g.ptr();
            const int64_t cnt = g.numel();
            for (int64_t i = 0; i < cnt; ++i)
                dx.data[static_cast<size_t>(i)] += (T(1) - y[i] * y[i]) * pg[i];
            break;
        }
        case OpKind::kSigmoid: {
            ArrayT<T>& dx = gbuf(0);
            const T* y = n.value.ptr();
            const T* pg = g.ptr();
            const int64_t cnt = g.numel();
            for (int64_t i = 0; i < cnt; ++i)
                dx.data[static_cast<size_t>(i)] += y[i] * (T(1) - y[i]) * pg[i];
            break;
        }
        case OpKind::kLinear:
            detail::linear_backward(val(0), val(1), g, &gbuf(0), &gbuf(1));
            break;
        case OpKind::kBmm:
            detail::bmm_backward(val(0), val(1), n.iargs[0] != 0, g, &gbuf(0), &gbuf(1));
            break;
        case OpKind::kConv2d:
            detail::conv2d_backward(val(0), val(1), g, &gbuf(0), &gbuf(1), &gbuf(2));
            break;
        case OpKind::kSoftmax: {
            std::vector<int> axes(n.iargs.begin(), n.iargs.end());
            detail::softmax_backward(n.value, axes, g, gbuf(0));
            break;
        }
        case OpKind::kLayerNorm:
            detail::layer_norm_backward(val(0), val(1), n.aux, g, &gbuf(0), &gbuf(1), &gbuf(2));
            break;
        case OpKind::kDropout: {
            ArrayT<T>& dx = gbuf(0);
            const T* m = n.aux.ptr();
            const T* pg = g.ptr();
            const int64_t cnt = g.numel();
            for (int64_t i = 0; i < cnt; ++i) dx.data[static_cast<size_t>(i)] += pg[i] * m[i];
            break;
        }
        case OpKind::kTranspose: {
            // grad flows through the same index map, gathered instead of
            // scattered
            std::vector<int> perm(n.iargs.begin(), n.iargs.end());
            ArrayT<T>& dx = gbuf(0);
            PaddedDims pi(val(0).shape);
            auto contrib = detail::transpose_contrib(val(0).shape, perm);
            const T* pg = g.ptr();
            T* px = dx.ptr();
            int64_t idx = 0;
            for (int64_t i0 = 0; i0 < pi.dim[0]; ++i0)
                for (int64_t i1 = 0; i1 < pi.dim[1]; ++i1)
                    for (int64_t i2 = 0; i2 < pi.dim[2]; ++i2)
                        for (int64_t i3 = 0; i3 < pi.dim[3]; ++i3) {
                            const int64_t base = i0 * contrib[0] + i1 * contrib[1] +
                                                 i2 * contrib[2] + i3 * contrib[3];
                            for (int64_t i4 = 0; i4 < pi.dim[4]; ++i4)
                                px[idx++] += pg[base + i4 * contrib[4]];
                        }
            break;
        }
        case OpKind::kReshape:
            detail::axpy(g.numel(), T(1), g.ptr(), gbuf(0).ptr());
            break;
        case OpKind::kSlice:
            detail::slice_backward(g, static_cast<int>(n.iargs[0]), n.iargs[1], gbuf(0));
            break;
        case OpKind::kConcat: {
            const int axis = static_cast<int>(n.iargs[0]);
            const Shape& os = n.value.shape;
            int64_t outer = 1, block = 1;
            for (int i = 0; i < axis; ++i) outer *= os[static_cast<size_t>(i)];
            for (size_t i = static_cast<size_t>(axis) + 1; i < os.size(); ++i) block *= os[i];
            const int64_t dim_total = os[static_cast<size_t>(axis)];
            int64_t off = 0;
            for (int32_t src_id : n.inputs()) {
                ArrayT<T>& dsrc = grad_buffer(src_id);
                const int64_t len = dsrc.shape[static_cast<size_t>(axis)];
                for (int64_t o = 0; o < outer; ++o)
                    detail::axpy(len * block, T(1), g.ptr() + (o * dim_total + off) * block,
                                 dsrc.ptr() + o * len * block);
                off += len;
            }
            break;
        }
        case OpKind::kCrop2d:
            detail::crop2d_backward(g, n.iargs[0], n.iargs[1], n.iargs[2], gbuf(0));
            break;
        case OpKind::kSumAll: {
            ArrayT<T>& dx = gbuf(0);
            const T gv = g.data[0];
            for (auto& v : dx.data) v += gv;
            break;
        }
    }
}

template <typename T>
void GraphT<T>::backward(Var loss) {
    check_var(loss, "backward");
    if (nodes_[static_cast<size_t>(loss.id)].value.numel() != 1)
        throw ShapeError("backward: loss must hold exactly one element, got " +
                         shape_str(shape(loss)));
    if (has_grads_)
        for (auto& n : nodes_) n.grad = ArrayT<T>();
    has_grads_ = true;
    grad_buffer(loss.id).data[0] = T(1);
    for (int32_t id = loss.id; id >= 0; --id) {
        if (nodes_[static_cast<size_t>(id)].grad.numel() == 0) continue;
        run_backward(id);
    }
}

template <typename T>
void GraphT<T>::recompute() {
    for (int32_t id = 0; id < static_cast<int32_t>(nodes_.size()); ++id) run_forward(id);
}

template <typename T>
void GraphT<T>::add_param_grads(std::vector<ArrayT<T>>& buffers, T scale) const {
    for (const Node& n : nodes_) {
        if (n.op != OpKind::kParam || n.grad.numel() == 0) continue;
        ArrayT<T>& buf = buffers[static_cast<size_t>(n.param_index)];
        detail::axpy(n.grad.numel(), scale, n.grad.ptr(), buf.ptr());
    }
}

template class GraphT<float>;
template class GraphT<double>;

}  // namespace stsan
