#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsan/array.hpp"

namespace stsan {

// Handle into a GraphT tape. Invalid until assigned by an op.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

enum class OpKind : uint8_t {
    kInput,
    kParam,
    kAdd,        // broadcasting add (numpy right-aligned rules)
    kMul,        // elementwise, same shape
    kScale,      // x * constant
    kRelu,
    kTanh,
    kSigmoid,
    kLinear,     // x[...,d_in] . W[d_in,d_out]
    kBmm,        // batched matmul over the last two axes
    kConv2d,     // same-padding conv, input [H,W,Cin], kernel [k,k,Cin,Cout]
    kSoftmax,    // over an axis set, max-subtracted
    kLayerNorm,  // last axis, affine gain/bias
    kDropout,    // inverted dropout, mask frozen on the tape
    kTranspose,
    kReshape,
    kSlice,      // one axis, [start, start+len)
    kConcat,     // n-ary along one axis
    kCrop2d,     // centered window on axes 0,1 with zero fill
    kSumAll,     // reduce to a scalar (shape {1})
};

const char* op_name(OpKind k);

struct GraphOptions {
    bool check_finite = true;   // scan every op output for NaN/Inf
    bool training = false;      // dropout active only when true
    uint64_t dropout_seed = 0;  // per-forward mask stream
};

// Reverse-mode tape. Ops execute eagerly on creation (values are available
// immediately); backward() walks the recorded order once. Nodes own their
// values, so recompute() over unchanged leaves is bit-identical.
template <typename T>
class GraphT {
public:
    explicit GraphT(GraphOptions opts = {});
    ~GraphT();
    GraphT(const GraphT&) = delete;
    GraphT& operator=(const GraphT&) = delete;

    // Leaves.
    Var input(ArrayT<T> value);
    Var param(ArrayT<T> value, int param_index);  // index into the owning ParamStore

    // Elementwise / arithmetic.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, T factor);
    Var relu(Var x);
    Var tanh(Var x);
    Var sigmoid(Var x);

    // Linear algebra.
    Var linear(Var x, Var w);
    Var dense_affine(Var x, Var w, Var b) { return add(linear(x, w), b); }
    Var bmm(Var a, Var b, bool transpose_b);
    Var conv2d(Var x, Var kernel, Var bias);

    // Normalization / regularization.
    Var softmax(Var x, const std::vector<int>& axes);
    Var layer_norm(Var x, Var gain, Var bias, T eps);
    Var dropout(Var x, T rate);

    // Shape manipulation.
    Var transpose(Var x, const std::vector<int>& perm);
    Var reshape(Var x, Shape new_shape);
    Var slice(Var x, int axis, int64_t start, int64_t len);
    Var concat(const std::vector<Var>& xs, int axis);
    Var crop2d(Var x, int64_t center_i, int64_t center_j, int64_t size);

    // Reductions.
    Var sum_all(Var x);

    // Access.
    const ArrayT<T>& value(Var v) const;
    const Shape& shape(Var v) const;
    const ArrayT<T>& grad(Var v) const;  // valid after backward()
    int64_t node_count() const;

    // Seeds d(loss)/d(loss) = 1 and accumulates exact reverse-mode gradients
    // into every node. loss must hold exactly one element.
    void backward(Var loss);

    // Re-executes the recorded forward over unchanged leaf values.
    void recompute();

    // Adds scale * grad of every kParam node into buffers[param_index].
    // Buffers must already be shaped like the parameters.
    void add_param_grads(std::vector<ArrayT<T>>& buffers, T scale) const;

private:
    struct Node;
    Var push(Node node);
    void run_forward(int32_t id);
    void run_backward(int32_t id);
    ArrayT<T>& grad_buffer(int32_t id);
    void check_var(Var v, const char* ctx) const;

    std::vector<Node> nodes_;
    GraphOptions opts_;
    bool has_grads_ = false;
};

using Graph = GraphT<double>;

}  // namespace stsan
