// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "hybrid/scheduler.hpp"

using namespace hybrid;

namespace {
SelectorConfig fig_config() {
    SelectorConfig c;
    c.k = 0.05;
    c.t_mid = 750;
    c.t_max = 1000;
    c.i_max = 1000;
    return c;
}
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

TEST_CASE("tap probability values") {
    const SelectorConfig c = fig_config();
    CHECK(tap_probability(750, c) == 0.5);
    CHECK(tap_probability(1000, c) == doctest::Approx(logistic(12.5)).epsilon(1e-12));
    CHECK(tap_probability(1000, c) == doctest::Approx(0.9999963).epsilon(1e-7));
    CHECK(tap_probability(500, c) == doctest::Approx(3.7e-6).epsilon(0.01));
}

TEST_CASE("dynamic midpoint endpoints") {
    const SelectorConfig c = fig_config();
    CHECK(t_dyn(0, c) == 1000.0);
    CHECK(t_dyn(500, c) == 750.0);
    CHECK(t_dyn(1000, c) == 500.0);
}

TEST_CASE("dtap values") {
    const SelectorConfig c = fig_config();
    for (int t = 0; t < 1000; ++t) CHECK(std::abs(dtap_probability(500, t, c) - tap_probability(t, c)) <= 1e-12);
    CHECK(dtap_probability(0, 1000, c) == 0.5);
    CHECK(dtap_probability(1000, 750, c) == doctest::Approx(logistic(12.5)).epsilon(1e-12));
}

TEST_CASE("reversed mode is dtap with k negated") {
    SelectorConfig c = fig_config();
    c.mode = SelectorMode::reversed;
    SelectorConfig neg = fig_config();
    neg.k = -0.05;
    for (int i : {0, 300, 1000})
        for (int t : {0, 400, 999}) CHECK(zo_probability(i, t, c) == dtap_probability(i, t, neg));
}

TEST_CASE("stable sigmoid stays finite at extremes") {
    CHECK(stable_sigmoid(1000.0) == 1.0);
    CHECK(stable_sigmoid(-1000.0) == 0.0);
    CHECK(stable_sigmoid(0.0) == 0.5);
}

TEST_CASE("config validation") {
    SelectorConfig c = fig_config();
    c.t_mid = 0;
    CHECK_THROWS(c.validate());
    c = fig_config();
    c.t_mid = 1000;
    CHECK_THROWS(c.validate());
    c = fig_config();
    c.i_max = 0;
    CHECK_THROWS(c.validate());
    c = fig_config();
    c.t_mid = 400;
    CHECK(c.end_midpoint_negative());
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("branch decisions") {
    CHECK(decide(0.5, 0.5) == Branch::zo_high);
    CHECK(decide(0.51, 0.5) == Branch::bp_low);
    RandomStream rng(1);
    SelectorConfig c = fig_config();
    c.mode = SelectorMode::always_bp;
    for (int k = 0; k < 10; ++k) CHECK(select_branch(k, 999, c, rng) == Branch::bp_low);
    CHECK(rng.counter() == 0);
    c.mode = SelectorMode::always_zo;
    CHECK(select_branch(0, 0, c, rng) == Branch::zo_high);
}

TEST_CASE("empirical branch frequencies") {
    const SelectorConfig c = fig_config();
    RandomStream rng(42);
    int zo_high = 0, zo_low = 0;
    for (int k = 0; k < 100000; ++k) {
        zo_high += select_branch(1000, 1000, c, rng) == Branch::zo_high;
        zo_low += select_branch(0, 0, c, rng) == Branch::zo_high;
    }
    CHECK(zo_high / 100000.0 >= 0.999);
    CHECK(zo_low / 100000.0 <= 0.001);

    SelectorConfig u = fig_config();
    u.mode = SelectorMode::uniform_random;
    int n = 0;
    for (int k = 0; k < 100000; ++k) n += select_branch(k, 10, u, rng) == Branch::zo_high;
    CHECK(std::abs(n / 100000.0 - 0.5) < 3 * std::sqrt(0.25 / 100000.0));
}

TEST_CASE("mode names round trip") {
    for (auto m : {SelectorMode::tap, SelectorMode::dtap, SelectorMode::always_bp, SelectorMode::always_zo,
                   SelectorMode::uniform_random, SelectorMode::reversed})
        CHECK(parse_selector_mode(to_string(m)) == m);
    CHECK_THROWS(parse_selector_mode("SOMETIMES"));
}
