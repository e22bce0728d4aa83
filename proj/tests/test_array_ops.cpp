#include <doctest.h>

#include <cmath>

#include "stsan/graph.hpp"
#include "support/testutil.hpp"

using namespace stsan;
using test::rand_array;

TEST_CASE("array shape bookkeeping") {
    Array a({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(a.numel() == 6);
    CHECK(a.at(1, 2) == 6);
    CHECK_THROWS_AS(Array({2, 3}, std::vector<double>{1, 2}), ShapeError);
    CHECK_THROWS_AS(Array({2, 0, 3}), ShapeError);
    CHECK_THROWS_AS(Array({1, 1, 1, 1, 1, 1}), ShapeError);  // max 5 axes
}

TEST_CASE("conv2d annihilator and identity") {
    Rng rng = make_rng(1);
    Graph g;
    Var x = g.input(rand_array({4, 5, 3}, rng));
    Var zero_k = g.input(Array::zeros({3, 3, 3, 2}));
    Var zero_b = g.input(Array::zeros({2}));
    Var out = g.conv2d(x, zero_k, zero_b);
    for (double v : g.value(out).data) CHECK(v == 0.0);

    // 1x1 kernel carrying the identity over channels
    Array ident({1, 1, 3, 3});
    for (int c = 0; c < 3; ++c) ident.at(0, 0, c, c) = 1.0;
    Var k1 = g.input(ident);
    Var b3 = g.input(Array::zeros({3}));
    Var same = g.conv2d(x, k1, b3);
    for (size_t i = 0; i < g.value(x).data.size(); ++i)
        CHECK(g.value(same).data[i] == doctest::Approx(g.value(x).data[i]).epsilon(1e-12));
}

TEST_CASE("conv2d 3x3 ones on 3x3 ones gives the 9/6/4 pattern") {
    Graph g;
    Var x = g.input(Array::full({3, 3, 1}, 1.0));
    Var k = g.input(Array::full({3, 3, 1, 1}, 1.0));
    Var b = g.input(Array::zeros({1}));
    const Array& out = g.value(g.conv2d(x, k, b));
    CHECK(out.at(1, 1, 0) == doctest::Approx(9.0));
    CHECK(out.at(0, 1, 0) == doctest::Approx(6.0));
    CHECK(out.at(1, 0, 0) == doctest::Approx(6.0));
    CHECK(out.at(0, 0, 0) == doctest::Approx(4.0));
    CHECK(out.at(2, 2, 0) == doctest::Approx(4.0));
}

TEST_CASE("conv2d rejects channel mismatch") {
    Graph g;
    Var x = g.input(Array::zeros({3, 3, 2}));
    Var k = g.input(Array::zeros({3, 3, 4, 1}));
    Var b = g.input(Array::zeros({1}));
    CHECK_THROWS_AS(g.conv2d(x, k, b), ShapeError);
}

TEST_CASE("conv2d is linear in its input") {
    Rng rng = make_rng(7);
    Array x = rand_array({5, 4, 2}, rng);
    Array y = rand_array({5, 4, 2}, rng);
    Array k = rand_array({3, 3, 2, 3}, rng);
    const double a = 1.7, b = -0.4;
    Graph g;
    Var vk = g.input(k);
    Var vb = g.input(Array::zeros({3}));
    Array combo(x.shape);
    for (size_t i = 0; i < combo.data.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
    const Array& lhs = g.value(g.conv2d(g.input(combo), vk, vb));
    const Array& cx = g.value(g.conv2d(g.input(x), vk, vb));
    const Array& cy = g.value(g.conv2d(g.input(y), vk, vb));
    for (size_t i = 0; i < lhs.data.size(); ++i)
        CHECK(std::fabs(lhs.data[i] - (a * cx.data[i] + b * cy.data[i])) < 1e-9);
}

TEST_CASE("dense_affine identity and forced example") {
    Graph g;
    Array ident({2, 2});
    ident.at(0, 0) = 1.0;
    ident.at(1, 1) = 1.0;
    Var x = g.input(Array({1, 2}, {1.0, 2.0}));
    Var w = g.input(ident);
    Var b0 = g.input(Array::zeros({2}));
    const Array& same = g.value(g.dense_affine(x, w, b0));
    CHECK(same.data[0] == 1.0);
    CHECK(same.data[1] == 2.0);

    Var b3 = g.input(Array({2}, {3.0, 3.0}));
    const Array& out = g.value(g.dense_affine(x, w, b3));
    CHECK(out.data[0] == doctest::Approx(4.0));
    CHECK(out.data[1] == doctest::Approx(5.0));
}

TEST_CASE("dense_affine matches the triple-loop oracle") {
    Rng rng = make_rng(42);
    Array x = rand_array({2, 3}, rng);
    Array w = rand_array({3, 4}, rng);
    Array b = rand_array({4}, rng);
    Graph g;
    const Array& out = g.value(g.dense_affine(g.input(x), g.input(w), g.input(b)));
    Array expect = test::naive_matmul(x, w);
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 4; ++j)
            CHECK(out.at(i, j) == doctest::Approx(expect.at(i, j) + b.data[static_cast<size_t>(j)])
                                      .epsilon(1e-12));
    Graph g2;
    CHECK_THROWS_AS(g2.linear(g2.input(x), g2.input(rand_array({5, 4}, rng))), ShapeError);
}

TEST_CASE("activations at fixed points") {
    Graph g;
    Var x = g.input(Array({4}, {-1.0, 2.0, 0.0, std::log(3.0)}));
    const Array& r = g.value(g.relu(x));
    CHECK(r.data[0] == 0.0);
    CHECK(r.data[1] == 2.0);
    const Array& s = g.value(g.sigmoid(x));
    CHECK(s.data[2] == doctest::Approx(0.5));
    CHECK(s.data[3] == doctest::Approx(0.75).epsilon(1e-12));
    const Array& t = g.value(g.tanh(x));
    CHECK(t.data[2] == 0.0);
}

TEST_CASE("softmax uniform, closed form, and shift invariance") {
    Graph g;
    const Array& u = g.value(g.softmax(g.input(Array::full({4}, 3.25)), {0}));
    for (double v : u.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    const Array& p = g.value(g.softmax(g.input(Array({2}, {0.0, std::log(3.0)})), {0}));
    CHECK(p.data[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p.data[1] == doctest::Approx(0.75).epsilon(1e-12));

    Rng rng = make_rng(5);
    Array x = rand_array({6}, rng, -3, 3);
    Array shifted = x;
    for (auto& v : shifted.data) v += 17.5;
    const Array& a = g.value(g.softmax(g.input(x), {0}));
    const Array& b = g.value(g.softmax(g.input(shifted), {0}));
    for (size_t i = 0; i < a.data.size(); ++i)
        CHECK(std::fabs(a.data[i] - b.data[i]) < 1e-12);
}

TEST_CASE("softmax sums to one over its axis set") {
    Rng rng = make_rng(11);
    Array x = rand_array({2, 3, 4}, rng, -5, 5);
    Graph g;
    SUBCASE("single axis") {
        const Array& y = g.value(g.softmax(g.input(x), {2}));
        for (int64_t i = 0; i < 2; ++i)
            for (int64_t j = 0; j < 3; ++j) {
                double s = 0;
                for (int64_t k = 0; k < 4; ++k) s += y.at(i, j, k);
                CHECK(std::fabs(s - 1.0) < 1e-9);
            }
    }
    SUBCASE("axis set {0,2}") {
        const Array& y = g.value(g.softmax(g.input(x), {0, 2}));
        for (int64_t j = 0; j < 3; ++j) {
            double s = 0;
            for (int64_t i = 0; i < 2; ++i)
                for (int64_t k = 0; k < 4; ++k) s += y.at(i, j, k);
            CHECK(std::fabs(s - 1.0) < 1e-9);
        }
        for (double v : y.data) CHECK(v >= 0.0);
    }
    SUBCASE("empty axis set is rejected") {
        CHECK_THROWS_AS(g.softmax(g.input(x), {}), ShapeError);
    }
}

TEST_CASE("layer_norm fixed points") {
    Graph g;
    Var gain = g.input(Array::full({3}, 1.0));
    Var bias = g.input(Array::zeros({3}));
    const Array& z = g.value(g.layer_norm(g.input(Array::full({3}, 4.2)), gain, bias, 1e-6));
    for (double v : z.data) CHECK(std::fabs(v) < 1e-9);

    Var gain2 = g.input(Array::full({2}, 1.0));
    Var bias2 = g.input(Array::zeros({2}));
    const Array& pm = g.value(g.layer_norm(g.input(Array({2}, {-1.0, 1.0})), gain2, bias2, 0.0));
    CHECK(pm.data[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pm.data[1] == doctest::Approx(1.0).epsilon(1e-12));

    const Array& y = g.value(g.layer_norm(g.input(Array({3}, {1.0, 2.0, 3.0})), gain, bias, 0.0));
    const double r = std::sqrt(1.5);
    CHECK(y.data[0] == doctest::Approx(-r).epsilon(1e-12));
    CHECK(y.data[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y.data[2] == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("non-finite values are rejected at op boundaries") {
    Graph g;
    Array bad({2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(g.input(bad), NumericError);
    Array big({1}, {1e308});
    Var v = g.input(big);
    CHECK_THROWS_AS(g.mul(v, v), NumericError);  // overflows to inf
}

TEST_CASE("recorded graph recompute is bit-identical") {
    Rng rng = make_rng(99);
    GraphOptions opts;
    opts.training = true;
    opts.dropout_seed = 321;
    Graph g(opts);
    Var x = g.input(rand_array({4, 4, 2}, rng));
    Var k = g.input(rand_array({3, 3, 2, 2}, rng));
    Var b = g.input(rand_array({2}, rng));
    Var out = g.dropout(g.relu(g.conv2d(x, k, b)), 0.3);
    Array before = g.value(out);
    g.recompute();
    Array after = g.value(out);
    REQUIRE(before.data.size() == after.data.size());
    for (size_t i = 0; i < before.data.size(); ++i) CHECK(before.data[i] == after.data[i]);
}

TEST_CASE("shape ops round-trip") {
    Rng rng = make_rng(3);
    Array x = rand_array({2, 3, 4}, rng);
    Graph g;
    Var v = g.input(x);
    Var t = g.transpose(v, {2, 0, 1});
    CHECK(g.shape(t) == Shape{4, 2, 3});
    CHECK(g.value(t).at(3, 1, 2) == x.at(1, 2, 3));
    Var back = g.transpose(t, {1, 2, 0});
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(g.value(back).data[i] == x.data[i]);

    Var s = g.slice(v, 1, 1, 2);
    CHECK(g.shape(s) == Shape{2, 2, 4});
    CHECK(g.value(s).at(1, 0, 2) == x.at(1, 1, 2));

    Var c = g.concat({g.slice(v, 1, 0, 1), g.slice(v, 1, 1, 2)}, 1);
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(g.value(c).data[i] == x.data[i]);

    Var cropped = g.crop2d(v, 0, 0, 3);
    CHECK(g.shape(cropped) == Shape{3, 3, 4});
    // (0,0) window: row/col -1 are zero fill, the rest mirrors x
    CHECK(g.value(cropped).at(0, 0, 0) == 0.0);
    CHECK(g.value(cropped).at(1, 1, 2) == x.at(0, 0, 2));
    CHECK(g.value(cropped).at(2, 2, 3) == x.at(1, 1, 3));
}
