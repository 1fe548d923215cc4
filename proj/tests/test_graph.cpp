// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "hybrid/graph.hpp"
#include "reference_graph.hpp"

using namespace hybrid;

TEST_CASE("tensor rejects mismatched data and non-finite values") {
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    Tensor t(Shape{3}, 1.0F);
    CHECK(t.all_finite());
    t[1] = std::nanf("");
    CHECK_THROWS_AS(t.check_finite("test"), NonFiniteValue);
    t[1] = INFINITY;
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("mse of a tensor with itself is zero") {
    Graph g;
    Tensor x(Shape{2, 3}, std::vector<float>{1, -2, 3, 0.5F, 7, -1});
    Var a = g.constant_ref(x);
    CHECK(g.value(g.mse(a, a)).item() == 0.0F);
}

TEST_CASE("avg_pool2x2 averages each window") {
    Graph g;
    Var x = g.constant(Tensor(Shape{1, 2, 2}, std::vector<float>{1, 1, 3, 3}));
    const Tensor& y = g.value(g.avg_pool2x2(x));
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y[0] == 2.0F);
}

TEST_CASE("square has derivative 6 at 3") {
    Graph g;
    Tensor theta(Shape{1}, 3.0F);
    Var p = g.parameter("theta", theta);
    auto grads = g.backward(g.mul(p, p));
    CHECK(grads.at("theta")[0] == doctest::Approx(6.0));
}

TEST_CASE("linear loss has the coefficients as gradient") {
    Graph g;
    Tensor c(Shape{1, 4}, std::vector<float>{0.5F, -1.0F, 2.0F, 3.0F});
    Tensor theta(Shape{4, 1}, std::vector<float>{1, 2, 3, 4});
    Var y = g.matmul(g.constant_ref(c), g.parameter("theta", theta));
    auto grads = g.backward(y);
    for (int i = 0; i < 4; ++i) CHECK(grads.at("theta")[i] == c[i]);
}

TEST_CASE("forward_only keeps no tape and no stored activations") {
    reference::Program p = reference::make_program(11);
    Graph g(GraphMode::forward_only);
    reference::build(g, p);
    CHECK(g.tape_size() == 0);
    CHECK(g.ledger().peak_elements == 0);
    CHECK(g.ledger().live_elements == 0);
    CHECK(g.ledger().transient_peak_elements > 0);
}

TEST_CASE("ledger peak never falls below live and is released by backward") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        reference::Program p = reference::make_program(seed);
        Graph g;
        Var out = reference::build(g, p);
        CHECK(g.ledger().peak_elements >= g.ledger().live_elements);
        g.backward(out);
        CHECK(g.ledger().live_elements == 0);
    }
}

TEST_CASE("backward can only run once and only in record mode") {
    Tensor theta(Shape{1}, 2.0F);
    Graph g;
    Var y = g.mul(g.parameter("t", theta), g.parameter("t", theta));
    g.backward(y);
    CHECK_THROWS_AS(g.backward(y), TapeCorrupt);

    Graph f(GraphMode::forward_only);
    Var z = f.mul(f.parameter("t", theta), f.parameter("t", theta));
    CHECK_THROWS_AS(f.backward(z), TapeCorrupt);
}

TEST_CASE("parameter bound twice accumulates its gradient") {
    Tensor theta(Shape{1}, 2.0F);
    Graph g;
    auto grads = g.backward(g.mul(g.parameter("t", theta), g.parameter("t", theta)));
    CHECK(grads.at("t")[0] == doctest::Approx(4.0));
}

TEST_CASE("non-finite forward values raise") {
    Graph g;
    Tensor big(Shape{1}, 3e38F);
    Var a = g.constant_ref(big);
    CHECK_THROWS_AS(g.mul(a, a), NonFiniteValue);
}

TEST_CASE("two-layer perceptron gradients match central differences") {
    // 3 -> 4 -> 1 with silu: 12 + 4 + 4 = 20 parameters.
    RandomStream rng(5);
    Tensor x = reference::random_tensor({3, 1}, rng, 1.0);
    Tensor w1 = reference::random_tensor({4, 3}, rng, 0.5);
    Tensor b1 = reference::random_tensor({4, 1}, rng, 0.5);
    Tensor w2 = reference::random_tensor({1, 4}, rng, 0.5);
    Tensor target(Shape{1, 1}, 0.3F);
    auto forward = [&](Graph& g) {
        Var h = g.silu(g.add(g.matmul(g.parameter("w1", w1), g.constant_ref(x)), g.parameter("b1", b1)));
        Var y = g.matmul(g.parameter("w2", w2), h);
        return g.mse(y, g.constant_ref(target));
    };
    Graph g;
    auto grads = g.backward(forward(g));
    // Oracle: double-precision forward written out by hand.
    auto loss = [&](const std::map<std::string, std::vector<double>>& v) {
        double y = 0.0;
        for (int j = 0; j < 4; ++j) {
            double a = v.at("b1")[j];
            for (int i = 0; i < 3; ++i) a += v.at("w1")[j * 3 + i] * x[i];
            y += v.at("w2")[j] * (a / (1.0 + std::exp(-a)));
        }
        return (y - 0.3) * (y - 0.3);
    };
    std::map<std::string, std::vector<double>> v;
    for (auto [name, t] : {std::pair{"w1", &w1}, {"b1", &b1}, {"w2", &w2}})
        v[name] = std::vector<double>(t->data().begin(), t->data().end());
    int count = 0;
    for (auto& [name, vals] : v) {
        for (size_t i = 0; i < vals.size(); ++i, ++count) {
            const double orig = vals[i];
            vals[i] = orig + 1e-3;
            const double up = loss(v);
            vals[i] = orig - 1e-3;
            const double down = loss(v);
            vals[i] = orig;
            const double fd = (up - down) / 2e-3;
            CHECK(std::abs(grads.at(name)[i] - fd) / std::max(std::abs(fd), 1e-4) < 1e-3);
        }
    }
    CHECK(count == 20);
}

TEST_CASE("random programs: backward agrees with the double interpreter") {
    for (uint64_t seed = 100; seed < 130; ++seed) {
        reference::Program p = reference::make_program(seed);
        Graph g;
        Var out = reference::build(g, p);
        std::map<std::string, reference::DTensor> values;
        for (const auto& [name, t] : p.params) values.emplace(name, reference::to_d(t));
        CHECK(g.value(out).item() == doctest::Approx(reference::evaluate(p, values)).epsilon(1e-4));
        auto grads = g.backward(out);
        CHECK(reference::max_relative_error(grads, reference::numeric_gradient(p)) < 1e-3);
    }
}

TEST_CASE("broadcast rejects incompatible shapes") {
    Graph g;
    Var x = g.constant(Tensor(Shape{2, 1}));
    CHECK_THROWS_AS(g.broadcast(x, Shape{3, 4}), ShapeError);
    CHECK_THROWS_AS(g.broadcast(x, Shape{2, 4, 1}), ShapeError);
}

TEST_CASE("allocation counter sees copies") {
    Tensor t(Shape{10});
    AllocationCounter counter;
    Tensor u = t;
    CHECK(counter.allocations() == 1);
    CHECK(counter.elements() == 10);
}
