#include <doctest.h>

#include <cmath>

#include "stsan/graph.hpp"
#include "stsan/params.hpp"
#include "support/testutil.hpp"

using namespace stsan;
using test::OpGradCheck;
using test::rand_array;
using test::rand_array_off_zero;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("gradient of sum is all ones, unused leaves get zero") {
    Rng rng = make_rng(2);
    Graph g;
    Var p = g.input(rand_array({2, 3}, rng));
    Var unused = g.input(rand_array({4}, rng));
    Var loss = g.sum_all(p);
    g.backward(loss);
    for (double v : g.grad(p).data) CHECK(v == 1.0);
    for (double v : g.grad(unused).data) CHECK(v == 0.0);
}

TEST_CASE("backward requires a scalar loss") {
    Graph g;
    Var p = g.input(Array::zeros({2, 2}));
    CHECK_THROWS_AS(g.backward(p), ShapeError);
}

TEST_CASE("primitive gradients match central finite differences") {
    Rng rng = make_rng(31);

    SUBCASE("add with broadcasting") {
        OpGradCheck c;
        c.inputs = {rand_array({2, 3, 4}, rng), rand_array({3, 1}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); };
        auto r = c.run();
        CHECK_MESSAGE(r.max_rel < kTol, r.worst);
    }
    SUBCASE("mul") {
        OpGradCheck c;
        c.inputs = {rand_array({3, 4}, rng), rand_array({3, 4}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.mul(v[0], v[1]); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("scale") {
        OpGradCheck c;
        c.inputs = {rand_array({5}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.scale(v[0], -2.5); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("relu") {
        OpGradCheck c;
        c.inputs = {rand_array_off_zero({4, 4}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.relu(v[0]); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("tanh") {
        OpGradCheck c;
        c.inputs = {rand_array({6}, rng, -2, 2)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.tanh(v[0]); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("sigmoid") {
        OpGradCheck c;
        c.inputs = {rand_array({6}, rng, -3, 3)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.sigmoid(v[0]); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("linear") {
        OpGradCheck c;
        c.inputs = {rand_array({2, 3, 4}, rng), rand_array({4, 5}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.linear(v[0], v[1]); };
        auto r = c.run();
        CHECK_MESSAGE(r.max_rel < kTol, r.worst);
    }
    SUBCASE("bmm") {
        OpGradCheck c;
        c.inputs = {rand_array({2, 3, 4}, rng), rand_array({2, 4, 5}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.bmm(v[0], v[1], false); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("bmm transposed") {
        OpGradCheck c;
        c.inputs = {rand_array({2, 3, 4}, rng), rand_array({2, 5, 4}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.bmm(v[0], v[1], true); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("conv2d") {
        OpGradCheck c;
        c.inputs = {rand_array({4, 5, 2}, rng), rand_array({3, 3, 2, 3}, rng),
                    rand_array({3}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) {
            return g.conv2d(v[0], v[1], v[2]);
        };
        auto r = c.run();
        CHECK_MESSAGE(r.max_rel < kTol, r.worst);
    }
    SUBCASE("softmax over one axis") {
        OpGradCheck c;
        c.inputs = {rand_array({3, 5}, rng, -2, 2)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.softmax(v[0], {1}); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("softmax over an axis set") {
        OpGradCheck c;
        c.inputs = {rand_array({2, 3, 4}, rng, -2, 2)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.softmax(v[0], {0, 2}); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("layer_norm") {
        OpGradCheck c;
        c.inputs = {rand_array({3, 6}, rng), rand_array({6}, rng, 0.5, 1.5),
                    rand_array({6}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) {
            return g.layer_norm(v[0], v[1], v[2], 1e-6);
        };
        auto r = c.run();
        CHECK_MESSAGE(r.max_rel < kTol, r.worst);
    }
    SUBCASE("dropout") {
        OpGradCheck c;
        c.options.training = true;
        c.options.dropout_seed = 4242;
        c.inputs = {rand_array({4, 7}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) { return g.dropout(v[0], 0.4); };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("transpose") {
        OpGradCheck c;
        c.inputs = {rand_array({2, 3, 4}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) {
            return g.transpose(v[0], {2, 0, 1});
        };
        CHECK(c.run().max_rel < kTol);
    }
    SUBCASE("reshape, slice, concat, crop2d") {
        OpGradCheck c;
        c.inputs = {rand_array({4, 4, 3}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) {
            Var r = g.reshape(v[0], {4, 12});
            Var s = g.slice(r, 1, 2, 6);
            Var cat = g.concat({s, s}, 0);
            Var c2 = g.crop2d(cat, 0, 1, 3);
            return c2;
        };
        auto r = c.run();
        CHECK_MESSAGE(r.max_rel < kTol, r.worst);
    }
    SUBCASE("composed chain") {
        OpGradCheck c;
        c.inputs = {rand_array({4, 4, 2}, rng), rand_array({3, 3, 2, 4}, rng),
                    rand_array({4}, rng), rand_array({4}, rng, 0.5, 1.5),
                    rand_array({4}, rng)};
        c.build = [](Graph& g, const std::vector<Var>& v) {
            Var h = g.conv2d(v[0], v[1], v[2]);
            Var n = g.layer_norm(h, v[3], v[4], 1e-6);
            return g.softmax(n, {2});
        };
        auto r = c.run();
        CHECK_MESSAGE(r.max_rel < kTol, r.worst);
    }
}

TEST_CASE("param nodes route gradients into store-aligned buffers") {
    Rng rng = make_rng(17);
    ParamStore store;
    int wi = store.add("w", {3, 2}, InitKind::kFanUniform, rng, 3, 2);
    int bi = store.add("b", {2}, InitKind::kZeros, rng);
    Graph g;
    Var x = g.input(rand_array({4, 3}, rng));
    Var w = g.param(store.at(wi).value, wi);
    Var b = g.param(store.at(bi).value, bi);
    Var loss = g.sum_all(g.dense_affine(x, w, b));
    g.backward(loss);
    auto bufs = store.make_grad_buffers();
    g.add_param_grads(bufs, 1.0);
    // d loss / d b = number of rows
    for (double v : bufs[static_cast<size_t>(bi)].data) CHECK(v == doctest::Approx(4.0));
    // d loss / d w[i][j] = sum over rows of x[:, i]
    const Array& xv = g.value(x);
    for (int64_t i = 0; i < 3; ++i) {
        double s = 0;
        for (int64_t r = 0; r < 4; ++r) s += xv.at(r, i);
        CHECK(bufs[static_cast<size_t>(wi)].at(i, 0) == doctest::Approx(s));
        CHECK(bufs[static_cast<size_t>(wi)].at(i, 1) == doctest::Approx(s));
    }
}

TEST_CASE("parameter store enforces unique names and aligned grads") {
    Rng rng = make_rng(8);
    ParamStore store;
    store.add("layer.w", {2, 2}, InitKind::kFanUniform, rng, 2, 2);
    CHECK_THROWS_AS(store.add("layer.w", {2, 2}, InitKind::kZeros, rng), DataError);
    CHECK(store.at("layer.w").grad.shape == store.at("layer.w").value.shape);
}
