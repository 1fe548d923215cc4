// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include "doctest.h"
#include "hybrid/bp_optimizer.hpp"
#include "hybrid/memory.hpp"

using namespace hybrid;

TEST_CASE("plain gradient step on half square") {
    ParameterSet p;
    p.add("theta", Tensor(Shape{2}, 1.0F), true);
    BpConfig cfg;
    cfg.eta = 0.1;
    bp_step(p, [](Graph& g, const ParameterSet& q) {
        Var t = g.parameter("theta", q.get("theta"));
        // mean(t * t) over 2 elements is half the squared norm times 1.
        return g.mean(g.mul(t, t));
    }, cfg);
    CHECK(p.get("theta")[0] == doctest::Approx(0.9));
    CHECK(p.get("theta")[1] == doctest::Approx(0.9));
}

TEST_CASE("zero learning rate leaves parameters bit exact") {
    Denoiser m;
    ParameterSet p = m.init_params(1);
    m.attach_lora(p, 2);
    const ParameterSet before = p;
    BpConfig cfg;
    cfg.eta = 0.0;
    bp_step(m, p, seeded_normal({1, 32, 32}, 1), 4, 500, cfg, 3);
    CHECK(p == before);
}

TEST_CASE("frozen tensors never move") {
    Denoiser m;
    ParameterSet p = m.init_params(1);
    m.attach_lora(p, 2);
    const ParameterSet before = p;
    BpConfig cfg;
    cfg.eta = 0.1;
    bp_step(m, p, seeded_normal({1, 32, 32}, 1), 4, 500, cfg, 3);
    bool moved = false;
    for (const auto& e : p.entries()) {
        if (!e.trainable) CHECK(e.value == before.get(e.name));
        else moved = moved || !(e.value == before.get(e.name));
    }
    CHECK(moved);
}

TEST_CASE("low resolution step stores about a quarter of the activations") {
    Denoiser m;
    ParameterSet p = m.init_params(1);
    m.attach_lora(p, 2);
    BpConfig cfg;
    cfg.eta = 0.0;
    cfg.resize_ratio = 0.5;
    const auto low = bp_step(m, p, seeded_normal({1, 32, 32}, 1), 0, 500, cfg, 3);
    cfg.resize_ratio = 1.0;
    const auto high = bp_step(m, p, seeded_normal({1, 32, 32}, 1), 0, 500, cfg, 3);
    CHECK(low.input_shape == Shape{1, 16, 16});
    const double ratio = static_cast<double>(low.ledger.peak_elements) / static_cast<double>(high.ledger.peak_elements);
    CHECK(ratio >= 0.24);
    CHECK(ratio <= 0.26);
}

TEST_CASE("bp config validation") {
    BpConfig c;
    c.resize_ratio = 0.0;
    CHECK_THROWS(c.validate());
    c.resize_ratio = 1.1;
    CHECK_THROWS(c.validate());
    c = BpConfig{};
    c.eta = -1;
    CHECK_THROWS(c.validate());
}

TEST_CASE("predicted activations equal the ledger for several widths and ratios") {
    for (int ch : {8, 16, 24}) {
        DenoiserConfig mc;
        mc.channels = ch;
        Denoiser m(mc);
        ParameterSet p = m.init_params(1);
        m.attach_lora(p, 2);
        const ArchSpec arch = describe("c" + std::to_string(ch), m, p);
        for (double r : {0.5, 0.625, 0.75, 1.0}) {
            BpConfig cfg;
            cfg.eta = 0.0;
            cfg.resize_ratio = r;
            const auto res = bp_step(m, p, seeded_normal({1, 32, 32}, 1), 2, 600, cfg, 3);
            const int64_t s = resized_extent(32, r);
            const MemoryEstimate e = predict(arch, s, s, MemBranch::bp);
            CHECK(e.activation_elements == res.ledger.peak_elements);
            CHECK(e.transient_elements == res.ledger.transient_peak_elements);
            CHECK(e.total_elements ==
                  measured_total_elements(res.ledger, p.numel(), p.trainable_numel(), MemBranch::bp));
        }
        ActivationLedger fwd;
        m.loss_value(p, seeded_normal({1, 32, 32}, 1), 2, 600, seeded_normal({1, 32, 32}, 2), &fwd);
        const MemoryEstimate z = predict(arch, 32, 32, MemBranch::zo);
        CHECK(z.activation_elements == 0);
        CHECK(fwd.peak_elements == 0);
        CHECK(z.transient_elements == fwd.transient_peak_elements);
        CHECK(predict(arch, 32, 32, MemBranch::bp).total_elements > z.total_elements);
    }
}

TEST_CASE("report rows follow the peak definition and grow with r") {
    Denoiser m;
    ParameterSet p = m.init_params(1);
    m.attach_lora(p, 2);
    const auto rows = report({describe("ref", m, p)}, {0.5, 0.625, 0.75, 1.0});
    int64_t prev = 0;
    int64_t bp_high = 0;
    for (const auto& r : rows) {
        CHECK(r.peak_bytes == std::max(r.bp_bytes, r.zo_bytes));
        CHECK(r.bp_bytes > prev);
        prev = r.bp_bytes;
        if (r.ratio == 1.0) bp_high = r.bp_bytes;
    }
    for (const auto& r : rows) {
        if (r.ratio < 1.0) CHECK(r.peak_bytes < bp_high);
    }
    std::ostringstream os;
    write_report_csv(os, rows);
    CHECK(os.str().rfind("arch,method,ratio,", 0) == 0);
}

TEST_CASE("unknown layer kinds are rejected") {
    ArchSpec a;
    a.layers.push_back({"attention", 4, 4, 0, 0, 0});
    CHECK_THROWS_AS(predict(a, 8, 8, MemBranch::bp), UnknownLayer);
}
