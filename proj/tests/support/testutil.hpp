#pragma once

// Shared helpers for the test suites: random arrays, independent oracles,
// and the central finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stsan/array.hpp"
#include "stsan/graph.hpp"
#include "stsan/rng.hpp"

namespace stsan::test {

inline Array rand_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : a.data) v = u(rng);
    return a;
}

// Random values bounded away from zero, for ops with a kink at 0 (relu).
inline Array rand_array_off_zero(Shape shape, Rng& rng, double margin = 0.15) {
    Array a = rand_array(std::move(shape), rng, margin, 1.0);
    std::bernoulli_distribution flip(0.5);
    for (auto& v : a.data)
        if (flip(rng)) v = -v;
    return a;
}

inline double rel_err(double a, double b, double floor_ = 1e-6) {
    const double denom = std::max({std::fabs(a), std::fabs(b), floor_});
    return std::fabs(a - b) / denom;
}

// Plain triple-loop matrix product, the dense_affine oracle.
inline Array naive_matmul(const Array& a, const Array& b) {
    const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Array c({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0;
            for (int64_t l = 0; l < k; ++l) s += a.at(i, l) * b.at(l, j);
            c.at(i, j) = s;
        }
    return c;
}

struct GradCheckReport {
    double max_rel = 0.0;
    int64_t checked = 0;
    std::string worst;
};

// Central finite differences over every element of every listed array.
// `eval` must recompute the scalar loss from the arrays' current contents;
// `analytic[i]` is d loss / d arrays[i].
inline GradCheckReport fd_check(const std::function<double()>& eval,
                                std::vector<Array*> arrays,
                                const std::vector<const Array*>& analytic,
                                double h = 1e-5, double floor_ = 1e-6) {
    GradCheckReport rep;
    for (size_t ai = 0; ai < arrays.size(); ++ai) {
        Array& arr = *arrays[ai];
        for (size_t j = 0; j < arr.data.size(); ++j) {
            const double orig = arr.data[j];
            arr.data[j] = orig + h;
            const double up = eval();
            arr.data[j] = orig - h;
            const double dn = eval();
            arr.data[j] = orig;
            const double numeric = (up - dn) / (2.0 * h);
            const double exact = analytic[ai]->data[j];
            const double r = rel_err(exact, numeric, floor_);
            ++rep.checked;
            if (r > rep.max_rel) {
                rep.max_rel = r;
                rep.worst = "array " + std::to_string(ai) + " elem " + std::to_string(j) +
                            " analytic " + std::to_string(exact) + " numeric " +
                            std::to_string(numeric);
            }
        }
    }
    return rep;
}

// Gradient check of a single graph op: loss = sum(output * R) with a fixed
// random projection R, gradients checked for every input element.
struct OpGradCheck {
    std::function<Var(Graph&, const std::vector<Var>&)> build;
    std::vector<Array> inputs;
    uint64_t seed = 1234;
    GraphOptions options;

    GradCheckReport run(double h = 1e-5, double floor_ = 1e-6) {
        Rng rng = make_rng(seed, 77);
        Array projection;
        {
            Graph g(options);
            std::vector<Var> vs;
            for (auto& a : inputs) vs.push_back(g.input(a));
            Var out = build(g, vs);
            projection = rand_array(g.shape(out), rng);
        }
        auto eval = [&]() {
            Graph g(options);
            std::vector<Var> vs;
            for (auto& a : inputs) vs.push_back(g.input(a));
            Var out = build(g, vs);
            Var loss = g.sum_all(g.mul(out, g.input(projection)));
            return g.value(loss).data[0];
        };
        // analytic pass
        Graph g(options);
        std::vector<Var> vs;
        for (auto& a : inputs) vs.push_back(g.input(a));
        Var out = build(g, vs);
        Var loss = g.sum_all(g.mul(out, g.input(projection)));
        g.backward(loss);
        std::vector<Array> grads;
        grads.reserve(vs.size());
        for (Var v : vs) grads.push_back(g.grad(v));
        std::vector<Array*> arrays;
        std::vector<const Array*> analytic;
        for (size_t i = 0; i < inputs.size(); ++i) {
            arrays.push_back(&inputs[i]);
            analytic.push_back(&grads[i]);
        }
        return fd_check(eval, arrays, analytic, h, floor_);
    }
};

}  // namespace stsan::test
