#pragma once

// Raw forward/backward kernels behind GraphT. Shapes are validated by the
// graph before these run; kernels assume well-formed inputs. Backward kernels
// accumulate (+=) into caller-zeroed gradient buffers.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "stsan/array.hpp"

namespace stsan::detail {

template <typename T>
inline void axpy(int64_t n, T a, const T* __restrict x, T* __restrict y) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(int64_t n, const T* __restrict x, const T* __restrict y) {
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

// ---- broadcasting -------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
    const int r = std::max(ra, rb);
    Shape out(static_cast<size_t>(r), 1);
    for (int i = 0; i < r; ++i) {
        const int64_t da = i < r - ra ? 1 : a[static_cast<size_t>(i - (r - ra))];
        const int64_t db = i < r - rb ? 1 : b[static_cast<size_t>(i - (r - rb))];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " do not broadcast");
        out[static_cast<size_t>(i)] = std::max(da, db);
    }
    return out;
}

// Strides of `s` viewed under the (already compatible) broadcast target,
// padded to kMaxRank; broadcast axes get stride 0.
inline std::array<int64_t, kMaxRank> broadcast_strides(const Shape& s, const Shape& target) {
    PaddedDims ps(s), pt(target);
    std::array<int64_t, kMaxRank> st{};
    for (int i = 0; i < kMaxRank; ++i) st[i] = (ps.dim[i] == pt.dim[i]) ? ps.stride[i] : 0;
    return st;
}

template <typename T>
void add_broadcast_forward(const ArrayT<T>& a, const ArrayT<T>& b, ArrayT<T>& out) {
    if (a.shape == b.shape) {
        const T* __restrict pa = a.ptr();
        const T* __restrict pb = b.ptr();
        T* __restrict po = out.ptr();
        const int64_t n = out.numel();
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
        return;
    }
    PaddedDims po(out.shape);
    auto sa = broadcast_strides(a.shape, out.shape);
    auto sb = broadcast_strides(b.shape, out.shape);
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* o = out.ptr();
    int64_t idx = 0;
    for (int64_t i0 = 0; i0 < po.dim[0]; ++i0)
        for (int64_t i1 = 0; i1 < po.dim[1]; ++i1)
            for (int64_t i2 = 0; i2 < po.dim[2]; ++i2)
                for (int64_t i3 = 0; i3 < po.dim[3]; ++i3) {
                    const int64_t base_a =
                        i0 * sa[0] + i1 * sa[1] + i2 * sa[2] + i3 * sa[3];
                    const int64_t base_b =
                        i0 * sb[0] + i1 * sb[1] + i2 * sb[2] + i3 * sb[3];
                    for (int64_t i4 = 0; i4 < po.dim[4]; ++i4)
                        o[idx++] = pa[base_a + i4 * sa[4]] + pb[base_b + i4 * sb[4]];
                }
}

// Sum `src` (shaped like `from`) into `dst` (shaped like `to`, broadcast-
// compatible with `from`).
template <typename T>
void reduce_into_shape(const ArrayT<T>& src, ArrayT<T>& dst) {
    if (src.shape == dst.shape) {
        axpy(src.numel(), T(1), src.ptr(), dst.ptr());
        return;
    }
    PaddedDims ps(src.shape);
    auto sd = broadcast_strides(dst.shape, src.shape);
    const T* p = src.ptr();
    T* d = dst.ptr();
    int64_t idx = 0;
    for (int64_t i0 = 0; i0 < ps.dim[0]; ++i0)
        for (int64_t i1 = 0; i1 < ps.dim[1]; ++i1)
            for (int64_t i2 = 0; i2 < ps.dim[2]; ++i2)
                for (int64_t i3 = 0; i3 < ps.dim[3]; ++i3) {
                    const int64_t base =
                        i0 * sd[0] + i1 * sd[1] + i2 * sd[2] + i3 * sd[3];
                    for (int64_t i4 = 0; i4 < ps.dim[4]; ++i4)
                        d[base + i4 * sd[4]] += p[idx++];
                }
}

// ---- linear: x[...,d_in] . W[d_in,d_out] --------------------------------

template <typename T>
void linear_forward(const ArrayT<T>& x, const ArrayT<T>& w, ArrayT<T>& out) {
    const int64_t d_in = w.shape[0], d_out = w.shape[1];
    const int64_t rows = x.numel() / d_in;
    const T* __restrict px = x.ptr();
    const T* __restrict pw = w.ptr();
    T* __restrict po = out.ptr();
    for (int64_t r = 0; r < rows; ++r) {
        T* orow = po + r * d_out;
        std::fill(orow, orow + d_out, T(0));
        const T* xrow = px + r * d_in;
        for (int64_t i = 0; i < d_in; ++i) axpy(d_out, xrow[i], pw + i * d_out, orow);
    }
}

template <typename T>
void linear_backward(const ArrayT<T>& x, const ArrayT<T>& w, const ArrayT<T>& dout,
                     ArrayT<T>* dx, ArrayT<T>* dw) {
    const int64_t d_in = w.shape[0], d_out = w.shape[1];
    const int64_t rows = x.numel() / d_in;
    const T* px = x.ptr();
    const T* pw = w.ptr();
    const T* pd = dout.ptr();
    for (int64_t r = 0; r < rows; ++r) {
        const T* drow = pd + r * d_out;
        const T* xrow = px + r * d_in;
        if (dx) {
            T* gx = dx->ptr() + r * d_in;
            for (int64_t i = 0; i < d_in; ++i) gx[i] += dot(d_out, drow, pw + i * d_out);
        }
        if (dw) {
            T* gw = dw->ptr();
            for (int64_t i = 0; i < d_in; ++i) axpy(d_out, xrow[i], drow, gw + i * d_out);
        }
    }
}

// ---- batched matmul over the last two axes ------------------------------

template <typename T>
void bmm_forward(const ArrayT<T>& a, const ArrayT<T>& b, bool trans_b, ArrayT<T>& out) {
    const int ra = a.rank();
    const int64_t m = a.shape[static_cast<size_t>(ra - 2)];
    const int64_t k = a.shape[static_cast<size_t>(ra - 1)];
    const int64_t n = trans_b ? b.shape[static_cast<size_t>(ra - 2)]
                              : b.shape[static_cast<size_t>(ra - 1)];
    const int64_t batches = a.numel() / (m * k);
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* po = out.ptr();
    for (int64_t bt = 0; bt < batches; ++bt) {
        const T* A = pa + bt * m * k;
        const T* B = pb + bt * k * n;
        T* C = po + bt * m * n;
        if (trans_b) {
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) C[i * n + j] = dot(k, A + i * k, B + j * k);
        } else {
            for (int64_t i = 0; i < m; ++i) {
                T* crow = C + i * n;
                std::fill(crow, crow + n, T(0));
                for (int64_t l = 0; l < k; ++l) axpy(n, A[i * k + l], B + l * n, crow);
            }
        }
    }
}

template <typename T>
void bmm_backward(const ArrayT<T>& a, const ArrayT<T>& b, bool trans_b, const ArrayT<T>& dout,
                  ArrayT<T>* da, ArrayT<T>* db) {
    const int ra = a.rank();
    const int64_t m = a.shape[static_cast<size_t>(ra - 2)];
    const int64_t k = a.shape[static_cast<size_t>(ra - 1)];
    const int64_t n = trans_b ? b.shape[static_cast<size_t>(ra - 2)]
                              : b.shape[static_cast<size_t>(ra - 1)];
    const int64_t batches = a.numel() / (m * k);
    for (int64_t bt = 0; bt < batches; ++bt) {
        const T* A = a.ptr() + bt * m * k;
        const T* B = b.ptr() + bt * k * n;
        const T* D = dout.ptr() + bt * m * n;
        T* GA = da ? da->ptr() + bt * m * k : nullptr;
        T* GB = db ? db->ptr() + bt * k * n : nullptr;
        if (trans_b) {
            // C = A . B^T with B stored [n, k]
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) {
                    const T g = D[i * n + j];
                    if (g == T(0)) continue;
                    if (GA) axpy(k, g, B + j * k, GA + i * k);
                    if (GB) axpy(k, g, A + i * k, GB + j * k);
                }
        } else {
            if (GA)
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t l = 0; l < k; ++l)
                        GA[i * k + l] += dot(n, D + i * n, B + l * n);
            if (GB)
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t l = 0; l < k; ++l) axpy(n, A[i * k + l], D + i * n, GB + l * n);
        }
    }
}

// ---- conv2d, stride 1, zero 'same' padding ------------------------------

template <typename T>
void conv2d_forward(const ArrayT<T>& x, const ArrayT<T>& kernel, const ArrayT<T>& bias,
                    ArrayT<T>& out) {
    const int64_t h = x.shape[0], w = x.shape[1], c_in = x.shape[2];
    const int64_t kh = kernel.shape[0], kw = kernel.shape[1], c_out = kernel.shape[3];
    const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const T* px = x.ptr();
    const T* pk = kernel.ptr();
    const T* pb = bias.ptr();
    T* po = out.ptr();
    for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx) {
            T* orow = po + (y * w + xx) * c_out;
            std::memcpy(orow, pb, static_cast<size_t>(c_out) * sizeof(T));
            for (int64_t dy = 0; dy < kh; ++dy) {
                const int64_t sy = y + dy - ph;
                if (sy < 0 || sy >= h) continue;
                for (int64_t dx = 0; dx < kw; ++dx) {
                    const int64_t sx = xx + dx - pw;
                    if (sx < 0 || sx >= w) continue;
                    const T* ipx = px + (sy * w + sx) * c_in;
                    const T* kbase = pk + (dy * kw + dx) * c_in * c_out;
                    for (int64_t ci = 0; ci < c_in; ++ci)
                        axpy(c_out, ipx[ci], kbase + ci * c_out, orow);
                }
            }
        }
}

template <typename T>
void conv2d_backward(const ArrayT<T>& x, const ArrayT<T>& kernel, const ArrayT<T>& dout,
                     ArrayT<T>* dx, ArrayT<T>* dk, ArrayT<T>* db) {
    const int64_t h = x.shape[0], w = x.shape[1], c_in = x.shape[2];
    const int64_t kh = kernel.shape[0], kw = kernel.shape[1], c_out = kernel.shape[3];
    const int64_t ph = (kh - 1) / 2, pw = (kw - 1) / 2;
    const T* px = x.ptr();
    const T* pk = kernel.ptr();
    const T* pd = dout.ptr();
    if (db) {
        T* gb = db->ptr();
        for (int64_t i = 0; i < h * w; ++i) axpy(c_out, T(1), pd + i * c_out, gb);
    }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx) {
            const T* drow = pd + (y * w + xx) * c_out;
            for (int64_t ky = 0; ky < kh; ++ky) {
                const int64_t sy = y + ky - ph;
                if (sy < 0 || sy >= h) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const int64_t sx = xx + kx - pw;
                    if (sx < 0 || sx >= w) continue;
                    const int64_t in_off = (sy * w + sx) * c_in;
                    const int64_t k_off = (ky * kw + kx) * c_in * c_out;
                    for (int64_t ci = 0; ci < c_in; ++ci) {
                        if (dk) axpy(c_out, px[in_off + ci], drow, dk->ptr() + k_off + ci * c_out);
                        if (dx) dx->ptr()[in_off + ci] += dot(c_out, pk + k_off + ci * c_out, drow);
                    }
                }
            }
        }
}

// ---- softmax over an axis set -------------------------------------------

// Strides mapping each element to its group (reduced axes contribute 0).
inline std::array<int64_t, kMaxRank> group_strides(const Shape& shape,
                                                   const std::vector<int>& axes) {
    PaddedDims p(shape);
    const int off = kMaxRank - static_cast<int>(shape.size());
    std::array<bool, kMaxRank> reduced{};
    for (int ax : axes) reduced[static_cast<size_t>(off + ax)] = true;
    std::array<int64_t, kMaxRank> gs{};
    int64_t stride = 1;
    for (int i = kMaxRank - 1; i >= 0; --i) {
        if (reduced[static_cast<size_t>(i)]) {
            gs[static_cast<size_t>(i)] = 0;
        } else {
            gs[static_cast<size_t>(i)] = stride;
            stride *= p.dim[static_cast<size_t>(i)];
        }
    }
    return gs;
}

inline int64_t group_count(const Shape& shape, const std::vector<int>& axes) {
    int64_t n = shape_numel(shape);
    for (int ax : axes) n /= shape[static_cast<size_t>(ax)];
    return n;
}

template <typename T, typename Fn>
void for_each_grouped(const Shape& shape, const std::vector<int>& axes, Fn&& fn) {
    PaddedDims p(shape);
    auto gs = group_strides(shape, axes);
    int64_t idx = 0;
    for (int64_t i0 = 0; i0 < p.dim[0]; ++i0)
        for (int64_t i1 = 0; i1 < p.dim[1]; ++i1)
            for (int64_t i2 = 0; i2 < p.dim[2]; ++i2)
                for (int64_t i3 = 0; i3 < p.dim[3]; ++i3) {
                    const int64_t gbase =
                        i0 * gs[0] + i1 * gs[1] + i2 * gs[2] + i3 * gs[3];
                    for (int64_t i4 = 0; i4 < p.dim[4]; ++i4)
                        fn(idx++, gbase + i4 * gs[4]);
                }
}

template <typename T>
void softmax_forward(const ArrayT<T>& x, const std::vector<int>& axes, ArrayT<T>& out) {
    const int64_t groups = group_count(x.shape, axes);
    std::vector<T> maxes(static_cast<size_t>(groups), -std::numeric_limits<T>::infinity());
    const T* px = x.ptr();
    T* po = out.ptr();
    for_each_grouped<T>(x.shape, axes, [&](int64_t i, int64_t g) {
        maxes[static_cast<size_t>(g)] = std::max(maxes[static_cast<size_t>(g)], px[i]);
    });
    std::vector<T> sums(static_cast<size_t>(groups), T(0));
    for_each_grouped<T>(x.shape, axes, [&](int64_t i, int64_t g) {
        const T e = std::exp(px[i] - maxes[static_cast<size_t>(g)]);
        po[i] = e;
        sums[static_cast<size_t>(g)] += e;
    });
    for_each_grouped<T>(x.shape, axes, [&](int64_t i, int64_t g) {
        po[i] /= sums[static_cast<size_t>(g)];
    });
}

template <typename T>
void softmax_backward(const ArrayT<T>& y, const std::vector<int>& axes, const ArrayT<T>& dout,
                      ArrayT<T>& dx) {
    const int64_t groups = group_count(y.shape, axes);
    std::vector<T> dots(static_cast<size_t>(groups), T(0));
    const T* py = y.ptr();
    const T* pd = dout.ptr();
    T* gx = dx.ptr();
    for_each_grouped<T>(y.shape, axes, [&](int64_t i, int64_t g) {
        dots[static_cast<size_t>(g)] += py[i] * pd[i];
    });
    for_each_grouped<T>(y.shape, axes, [&](int64_t i, int64_t g) {
        gx[i] += py[i] * (pd[i] - dots[static_cast<size_t>(g)]);
    });
}

// ---- layer norm over the last axis ---------------------------------------

// aux holds {mean, rstd} per row, filled by forward and reused by backward.
template <typename T>
void layer_norm_forward(const ArrayT<T>& x, const ArrayT<T>& gain, const ArrayT<T>& bias, T eps,
                        ArrayT<T>& out, ArrayT<T>& aux) {
    const int64_t d = x.shape.back();
    const int64_t rows = x.numel() / d;
    const T* px = x.ptr();
    const T* pg = gain.ptr();
    const T* pb = bias.ptr();
    T* po = out.ptr();
    T* pa = aux.ptr();
    for (int64_t r = 0; r < rows; ++r) {
        const T* xrow = px + r * d;
        T mean = T(0);
        for (int64_t i = 0; i < d; ++i) mean += xrow[i];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (int64_t i = 0; i < d; ++i) {
            const T diff = xrow[i] - mean;
            var += diff * diff;
        }
        var /= static_cast<T>(d);
        const T rstd = T(1) / std::sqrt(var + eps);
        pa[2 * r] = mean;
        pa[2 * r + 1] = rstd;
        T* orow = po + r * d;
        for (int64_t i = 0; i < d; ++i) orow[i] = (xrow[i] - mean) * rstd * pg[i] + pb[i];
    }
}

template <typename T>
void layer_norm_backward(const ArrayT<T>& x, const ArrayT<T>& gain, const ArrayT<T>& aux,
                         const ArrayT<T>& dout, ArrayT<T>* dx, ArrayT<T>* dgain,
                         ArrayT<T>* dbias) {
    const int64_t d = x.shape.back();
    const int64_t rows = x.numel() / d;
    const T* px = x.ptr();
    const T* pg = gain.ptr();
    const T* pa = aux.ptr();
    const T* pd = dout.ptr();
    std::vector<T> xhat(static_cast<size_t>(d));
    for (int64_t r = 0; r < rows; ++r) {
        const T* xrow = px + r * d;
        const T* drow = pd + r * d;
        const T mean = pa[2 * r], rstd = pa[2 * r + 1];
        T m1 = T(0), m2 = T(0);
        for (int64_t i = 0; i < d; ++i) {
            xhat[static_cast<size_t>(i)] = (xrow[i] - mean) * rstd;
            const T dxh = drow[i] * pg[i];
            m1 += dxh;
            m2 += dxh * xhat[static_cast<size_t>(i)];
        }
        m1 /= static_cast<T>(d);
        m2 /= static_cast<T>(d);
        for (int64_t i = 0; i < d; ++i) {
            const T xh = xhat[static_cast<size_t>(i)];
            if (dx) dx->ptr()[r * d + i] += (drow[i] * pg[i] - m1 - xh * m2) * rstd;
            if (dgain) dgain->ptr()[i] += drow[i] * xh;
            if (dbias) dbias->ptr()[i] += drow[i];
        }
    }
}

// ---- shape ops ------------------------------------------------------------

// Per-input-axis contribution of each output stride under `perm`
// (perm[j] = input axis placed at output axis j).
inline std::array<int64_t, kMaxRank> transpose_contrib(const Shape& in_shape,
                                                       const std::vector<int>& perm) {
    const int r = static_cast<int>(in_shape.size());
    Shape out_shape(static_cast<size_t>(r));
    for (int j = 0; j < r; ++j)
        out_shape[static_cast<size_t>(j)] = in_shape[static_cast<size_t>(perm[static_cast<size_t>(j)])];
    PaddedDims po(out_shape);
    const int off = kMaxRank - r;
    std::array<int64_t, kMaxRank> contrib{};
    for (int j = 0; j < r; ++j)
        contrib[static_cast<size_t>(off + perm[static_cast<size_t>(j)])] = po.stride[static_cast<size_t>(off + j)];
    return contrib;
}

template <typename T>
void transpose_apply(const ArrayT<T>& in, const std::vector<int>& perm, T* __restrict out,
                     bool accumulate) {
    PaddedDims pi(in.shape);
    auto contrib = transpose_contrib(in.shape, perm);
    const T* p = in.ptr();
    int64_t idx = 0;
    for (int64_t i0 = 0; i0 < pi.dim[0]; ++i0)
        for (int64_t i1 = 0; i1 < pi.dim[1]; ++i1)
            for (int64_t i2 = 0; i2 < pi.dim[2]; ++i2)
                for (int64_t i3 = 0; i3 < pi.dim[3]; ++i3) {
                    const int64_t base =
                        i0 * contrib[0] + i1 * contrib[1] + i2 * contrib[2] + i3 * contrib[3];
                    for (int64_t i4 = 0; i4 < pi.dim[4]; ++i4) {
                        const int64_t o = base + i4 * contrib[4];
                        if (accumulate)
                            out[o] += p[idx++];
                        else
                            out[o] = p[idx++];
                    }
                }
}

template <typename T>
void slice_forward(const ArrayT<T>& x, int axis, int64_t start, int64_t len, ArrayT<T>& out) {
    int64_t outer = 1, block = 1;
    for (int i = 0; i < axis; ++i) outer *= x.shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < x.rank(); ++i) block *= x.shape[static_cast<size_t>(i)];
    const int64_t dim = x.shape[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.ptr() + o * len * block, x.ptr() + (o * dim + start) * block,
                    static_cast<size_t>(len * block) * sizeof(T));
}

template <typename T>
void slice_backward(const ArrayT<T>& dout, int axis, int64_t start, ArrayT<T>& dx) {
    int64_t outer = 1, block = 1;
    for (int i = 0; i < axis; ++i) outer *= dx.shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < dx.rank(); ++i) block *= dx.shape[static_cast<size_t>(i)];
    const int64_t dim = dx.shape[static_cast<size_t>(axis)];
    const int64_t len = dout.shape[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < outer; ++o)
        axpy(len * block, T(1), dout.ptr() + o * len * block,
             dx.ptr() + (o * dim + start) * block);
}

template <typename T>
void crop2d_forward(const ArrayT<T>& x, int64_t ci, int64_t cj, int64_t size, ArrayT<T>& out) {
    const int64_t h = x.shape[0], w = x.shape[1];
    int64_t block = 1;
    for (int i = 2; i < x.rank(); ++i) block *= x.shape[static_cast<size_t>(i)];
    const int64_t half = (size - 1) / 2;
    for (int64_t bi = 0; bi < size; ++bi)
        for (int64_t bj = 0; bj < size; ++bj) {
            T* orow = out.ptr() + (bi * size + bj) * block;
            const int64_t si = ci - half + bi, sj = cj - half + bj;
            if (si < 0 || si >= h || sj < 0 || sj >= w) {
                std::fill(orow, orow + block, T(0));
            } else {
                std::memcpy(orow, x.ptr() + (si * w + sj) * block,
                            static_cast<size_t>(block) * sizeof(T));
            }
        }
}

template <typename T>
void crop2d_backward(const ArrayT<T>& dout, int64_t ci, int64_t cj, int64_t size, ArrayT<T>& dx) {
    const int64_t h = dx.shape[0], w = dx.shape[1];
    int64_t block = 1;
    for (int i = 2; i < dx.rank(); ++i) block *= dx.shape[static_cast<size_t>(i)];
    const int64_t half = (size - 1) / 2;
    for (int64_t bi = 0; bi < size; ++bi)
        for (int64_t bj = 0; bj < size; ++bj) {
            const int64_t si = ci - half + bi, sj = cj - half + bj;
            if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
            axpy(block, T(1), dout.ptr() + (bi * size + bj) * block,
                 dx.ptr() + (si * w + sj) * block);
        }
}

}  // namespace stsan::detail
