// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "hybrid/bp_optimizer.hpp"
#include "hybrid/denoiser.hpp"
#include "hybrid/diffusion.hpp"
#include "hybrid/random.hpp"

using namespace hybrid;

TEST_CASE("linear schedule is monotone with the expected endpoints") {
    const NoiseSchedule s = NoiseSchedule::linear(1000);
    for (int t = 0; t < 1000; ++t) {
        CHECK(s.beta[t] > 0.0);
        CHECK(s.beta[t] < 1.0);
        if (t > 0) {
            CHECK(s.beta[t] >= s.beta[t - 1]);
            CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
        }
    }
    CHECK(s.alpha_bar[0] > 0.999);
    CHECK(s.alpha_bar[999] < 1e-3);
    CHECK_THROWS_AS(s.check(1000), InvalidTimestep);
    CHECK_THROWS_AS(s.check(-1), InvalidTimestep);
}

TEST_CASE("noisify closed form") {
    Tensor x0(Shape{1}, 0.6F), eps(Shape{1}, -0.2F);
    CHECK(noisify_with(0.25, x0, eps)[0] == doctest::Approx(0.5 * 0.6 + std::sqrt(0.75) * -0.2));
    CHECK(noisify_with(0.25, x0, eps)[0] == doctest::Approx(0.12679).epsilon(1e-4));
    CHECK(noisify_with(1.0, x0, eps)[0] == x0[0]);
    CHECK(noisify_with(0.0, x0, eps)[0] == eps[0]);
}

TEST_CASE("noisified variance follows alpha_bar") {
    const NoiseSchedule s = NoiseSchedule::linear(1000);
    const Tensor x0(Shape{1, 64, 64}, 0.0F);
    const Tensor eps = seeded_normal(x0.shape(), 3);
    for (int t : {10, 500, 990}) {
        const Tensor xt = noisify(s, x0, t, eps);
        double v = 0.0;
        for (int64_t i = 0; i < xt.numel(); ++i) v += xt[i] * xt[i];
        v /= static_cast<double>(xt.numel());
        CHECK(v == doctest::Approx(1.0 - s.alpha_bar[t]).epsilon(0.06));
    }
}

TEST_CASE("downsample identity and 2x2 mean") {
    Tensor x(Shape{1, 2, 2}, std::vector<float>{1, 1, 3, 3});
    CHECK(downsample(x, 1.0) == x);
    CHECK(downsample(x, 0.5)[0] == 2.0F);
    CHECK_THROWS(downsample(x, 0.0));
    CHECK_THROWS(downsample(x, 1.5));
}

TEST_CASE("downsample at 0.625 matches a brute-force overlap integrator") {
    Tensor x(Shape{1, 32, 32});
    RandomStream rng(9);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
    const Tensor y = downsample(x, 0.625);
    REQUIRE(y.shape() == Shape{1, 20, 20});
    // Integrate the piecewise-constant input over each output cell on a fine
    // grid of 80 sub-samples per input pixel (exact: 32 * 80 / 20 = 128 per cell).
    constexpr int sub = 80;
    for (int oy = 0; oy < 20; ++oy) {
        for (int ox = 0; ox < 20; ++ox) {
            double acc = 0.0;
            int n = 0;
            for (int sy = oy * 128; sy < (oy + 1) * 128; ++sy) {
                for (int sx = ox * 128; sx < (ox + 1) * 128; ++sx) {
                    acc += x[static_cast<size_t>((sy / sub) * 32 + sx / sub)];
                    ++n;
                }
            }
            CHECK(y[static_cast<size_t>(oy * 20 + ox)] == doctest::Approx(acc / n).epsilon(1e-5));
        }
    }
}

TEST_CASE("denoiser accepts 16x16 and 32x32 with the same parameters") {
    Denoiser m;
    const ParameterSet p = m.init_params(1);
    for (int64_t s : {16, 20, 24, 32}) {
        Graph g(GraphMode::forward_only);
        Var out = m.predict_noise(g, p, g.constant(Tensor(Shape{1, s, s}, 0.1F)), 10, 0);
        CHECK(g.shape(out) == Shape{1, s, s});
    }
    Graph g(GraphMode::forward_only);
    CHECK_THROWS_AS(m.predict_noise(g, p, g.constant(Tensor(Shape{1, 18, 18})), 10, 0), ShapeError);
}

TEST_CASE("coordinate planes in pixel units shrink with the image") {
    const Tensor full = coordinate_planes(32, 32, 16.0, 16.0);
    const Tensor low = coordinate_planes(16, 16, 16.0, 16.0);
    CHECK(full[0] == doctest::Approx(-15.5 / 16.0));
    CHECK(full[31] == doctest::Approx(15.5 / 16.0));
    CHECK(low[0] == doctest::Approx(-7.5 / 16.0));
    CHECK(low[16 * 16 + 15 * 16] == doctest::Approx(7.5 / 16.0));
    const Tensor norm = coordinate_planes(16, 16, 8.0, 8.0);
    CHECK(norm[0] == doctest::Approx(-7.5 / 8.0));
}

TEST_CASE("adapters start as a no-op and only they and the subject token train") {
    Denoiser m;
    ParameterSet base = m.init_params(1);
    ParameterSet p = base;
    m.attach_lora(p, 2);
    CHECK(m.config().lora_rank == 4);
    CHECK(p.get(Denoiser::block_name(0, "proj.lora_a")).shape() == Shape{16, 4, 1, 1});
    for (const auto& e : p.entries()) {
        const bool adapter = e.name.find("lora") != std::string::npos || e.name == "subject_embed";
        CHECK(e.trainable == adapter);
    }
    const Tensor x = seeded_normal({1, 32, 32}, 4), eps = seeded_normal({1, 32, 32}, 5);
    CHECK(m.loss_value(base, x, 1, 300, eps) == m.loss_value(p, x, 1, 300, eps));
}

TEST_CASE("loss is deterministic and sampling is seeded and clamped") {
    Denoiser m;
    const ParameterSet p = m.init_params(3);
    const Tensor x = seeded_normal({1, 32, 32}, 4), eps = seeded_normal({1, 32, 32}, 5);
    CHECK(m.loss_value(p, x, 0, 100, eps) == m.loss_value(p, x, 0, 100, eps));
    const Tensor a = m.sample(p, 2, 8, 77);
    const Tensor b = m.sample(p, 2, 8, 77);
    CHECK(a == b);
    CHECK(a.all_finite());
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a[i]) <= 3.0F);
}

TEST_CASE("final sampler step adds no noise") {
    Denoiser m;
    const ParameterSet p = m.init_params(3);
    const Tensor out = m.sample(p, 1, 1, 5);
    // One step at t = t_max - 1 lands directly on the clipped x0 estimate.
    RandomStream rng(5);
    Tensor x(Shape{1, 32, 32});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
    Graph g(GraphMode::forward_only);
    const Tensor eps = g.value(m.predict_noise(g, p, g.constant_ref(x), 999, 1));
    const double ab = m.schedule().alpha_bar[999];
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double x0 = std::clamp((x[i] - std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(ab), -1.0, 1.0);
        CHECK(out[i] == doctest::Approx(x0).epsilon(1e-5));
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    Denoiser m;
    ParameterSet p = m.init_params(8);
    m.attach_lora(p, 9);
    const auto bytes = encode_checkpoint(p);
    ParameterSet q = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(q) == bytes);
    for (const auto& e : p.entries()) CHECK(q.get(e.name) == e.value);
    const auto path = std::filesystem::temp_directory_path() / "hybridopt_ckpt_test.bin";
    save_checkpoint(p, path.string());
    CHECK(encode_checkpoint(load_checkpoint(path.string())) == bytes);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt"), CheckpointError);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
}
