// SPDX-License-Identifier: Apache-2.0
#include "hybrid/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "hybrid/random.hpp"

namespace hybrid {

namespace {

Tensor gaussian(const Shape& shape, double stddev, RandomStream rng) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(stddev * rng.normal());
    return t;
}

}  // namespace

Denoiser::Denoiser(DenoiserConfig config)
    : config_(config), schedule_(NoiseSchedule::linear(config.t_max)) {
    if (config_.channels < 1 || config_.num_classes < 1 || config_.time_bins < 1 || config_.lora_rank < 0) {
        throw std::invalid_argument("invalid denoiser configuration");
    }
}

std::string Denoiser::block_name(int b, const std::string& leaf) {
    return "block" + std::to_string(b + 1) + "." + leaf;
}

int Denoiser::time_bin(int t) const {
    schedule_.check(t);
    return std::min(config_.time_bins - 1, static_cast<int>(static_cast<int64_t>(t) * config_.time_bins / config_.t_max));
}

Tensor coordinate_planes(int64_t h, int64_t w, double half_extent_x, double half_extent_y) {
    Tensor out(Shape{2, h, w});
    const double cx = 0.5 * static_cast<double>(w), cy = 0.5 * static_cast<double>(h);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            out[static_cast<size_t>(y * w + x)] = static_cast<float>((static_cast<double>(x) + 0.5 - cx) / half_extent_x);
            out[static_cast<size_t>(h * w + y * w + x)] = static_cast<float>((static_cast<double>(y) + 0.5 - cy) / half_extent_y);
        }
    }
    return out;
}

int Denoiser::block_level(int b) const {
    if (b < 0 || b >= num_blocks()) throw std::out_of_range("block index " + std::to_string(b));
    if (b == 0) return 0;
    if (b == 1 || b == num_blocks() - 1) return 1;
    return 2;
}

void Denoiser::check_condition(int c) const {
    if (c < 0 || c > config_.num_classes) throw std::out_of_range("condition id " + std::to_string(c) + " out of range");
}

ParameterSet Denoiser::init_params(uint64_t seed) const {
    const int64_t ch = config_.channels;
    RandomStream root(seed);
    ParameterSet p;
    auto add = [&](const std::string& name, const Shape& shape, double stddev) {
        p.add(name, stddev == 0.0 ? Tensor(shape, 0.0F) : gaussian(shape, stddev, root.fork(name)), true);
    };
    add("time_embed", {config_.time_bins, ch}, 1.0);
    add("class_embed", {config_.num_classes, ch}, 1.0);
    add("subject_embed", {1, ch}, 1.0);
    add("conv_in.w", {ch, 1, 3, 3}, std::sqrt(2.0 / 9.0));
    add("conv_in.b", {ch}, 0.0);
    add("conv_pos.w", {ch, 2, 3, 3}, std::sqrt(1.0 / 18.0));
    for (int b = 0; b < num_blocks(); ++b) {
        add(block_name(b, "cond.w"), {ch, ch}, std::sqrt(1.0 / static_cast<double>(ch)));
        add(block_name(b, "conv.w"), {ch, ch, 3, 3}, std::sqrt(2.0 / (9.0 * static_cast<double>(ch))));
        add(block_name(b, "conv.b"), {ch}, 0.0);
        add(block_name(b, "proj.w"), {ch, ch, 1, 1}, 0.5 * std::sqrt(1.0 / static_cast<double>(ch)));
        add(block_name(b, "proj.b"), {ch}, 0.0);
    }
    add("conv_out.w", {1, ch, 3, 3}, std::sqrt(1.0 / (9.0 * static_cast<double>(ch))));
    add("conv_out.b", {1}, 0.0);
    return p;
}

void Denoiser::attach_lora(ParameterSet& params, uint64_t seed) const {
    const int64_t ch = config_.channels;
    const int64_t r = config_.lora_rank;
    if (r == 0) {
        params.set_all_trainable(true);
        return;
    }
    params.set_all_trainable(false);
    RandomStream root(seed);
    for (int b = 0; b < num_blocks(); ++b) {
        const auto a_name = block_name(b, "proj.lora_a");
        const auto b_name = block_name(b, "proj.lora_b");
        if (!params.contains(a_name)) {
            params.add(a_name, Tensor(Shape{ch, r, 1, 1}, 0.0F), true);
            params.add(b_name, gaussian(Shape{r, ch, 1, 1}, std::sqrt(1.0 / static_cast<double>(ch)), root.fork(b_name)), true);
        }
        params.set_trainable(a_name, true);
        params.set_trainable(b_name, true);
    }
    params.set_trainable("subject_embed", true);
}

void Denoiser::init_subject_token(ParameterSet& params, int class_id) const {
    if (class_id < 0 || class_id >= config_.num_classes) throw std::out_of_range("class id out of range");
    const Tensor& table = params.get("class_embed");
    Tensor& subject = params.get("subject_embed");
    const int64_t ch = config_.channels;
    std::copy_n(table.ptr() + class_id * ch, ch, subject.ptr());
}

Var Denoiser::predict_noise(Graph& g, const ParameterSet& params, Var x_t, int t, int c) const {
    check_condition(c);
    const int64_t ch = config_.channels;
    const Shape xs = g.shape(x_t);
    if (xs.size() != 3 || xs[0] != 1 || xs[1] % 4 != 0 || xs[2] % 4 != 0) {
        throw ShapeError("denoiser input must be [1,H,W] with H,W divisible by 4, got " + shape_str(xs));
    }
    auto P = [&](const std::string& name) { return g.parameter(name, params.get(name), params.trainable(name)); };
    const bool lora = params.contains(block_name(0, "proj.lora_a"));

    Var et = g.embedding(P("time_embed"), time_bin(t));
    Var ec = c == subject_token() ? g.embedding(P("subject_embed"), 0) : g.embedding(P("class_embed"), c);
    Var cond = g.reshape(g.silu(g.add(et, ec)), Shape{1, ch});

    auto block = [&](int b, Var h) {
        const Shape hs = g.shape(h);
        Var bias = g.reshape(g.matmul(cond, P(block_name(b, "cond.w"))), Shape{ch, 1, 1});
        Var a = g.add(h, g.broadcast(bias, hs));
        Var s = g.silu(g.conv2d(a, P(block_name(b, "conv.w")), P(block_name(b, "conv.b")), 1));
        Var proj = g.conv2d(s, P(block_name(b, "proj.w")), P(block_name(b, "proj.b")), 0);
        if (lora) {
            Var down = g.conv2d(s, P(block_name(b, "proj.lora_b")), std::nullopt, 0);
            proj = g.add(proj, g.conv2d(down, P(block_name(b, "proj.lora_a")), std::nullopt, 0));
        }
        return g.add(h, proj);
    };

    const double half = 0.5 * kFullResolution;
    Var pos = g.constant(config_.pixel_coordinates
                             ? coordinate_planes(xs[1], xs[2], half, half)
                             : coordinate_planes(xs[1], xs[2], 0.5 * static_cast<double>(xs[2]), 0.5 * static_cast<double>(xs[1])));
    Var h0 = g.add(g.conv2d(x_t, P("conv_in.w"), P("conv_in.b"), 1), g.conv2d(pos, P("conv_pos.w"), std::nullopt, 1));
    Var h1 = block(0, h0);
    Var h2 = block(1, g.avg_pool2x2(h1));
    Var h3 = g.avg_pool2x2(h2);
    for (int b = 2; b < num_blocks() - 1; ++b) h3 = block(b, h3);
    Var h4 = block(num_blocks() - 1, g.add(upsample2x(g, h3), h2));
    Var m1 = g.add(upsample2x(g, h4), h1);
    return g.conv2d(m1, P("conv_out.w"), P("conv_out.b"), 1);
}

Var Denoiser::loss(Graph& g, const ParameterSet& params, const Tensor& x0, int c, int t, const Tensor& eps) const {
    Tensor x_t = noisify(schedule_, x0, t, eps);
    Var xv = g.constant(std::move(x_t));
    Var pred = predict_noise(g, params, xv, t, c);
    return g.mse(pred, g.constant_ref(eps));
}

double Denoiser::loss_value(const ParameterSet& params, const Tensor& x0, int c, int t, const Tensor& eps,
                            ActivationLedger* ledger) const {
    Graph g(GraphMode::forward_only);
    Var l = loss(g, params, x0, c, t, eps);
    if (ledger != nullptr) *ledger = g.ledger();
    return g.value(l).item();
}

Tensor Denoiser::sample(const ParameterSet& params, int c, int steps, uint64_t seed, int64_t resolution) const {
    check_condition(c);
    if (steps < 1) throw std::invalid_argument("sampler needs at least one step");
    steps = std::min(steps, config_.t_max);
    std::vector<int> ts;
    for (int k = 0; k < steps; ++k) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / (steps - 1);
        ts.push_back(static_cast<int>(std::lround((config_.t_max - 1) * (1.0 - frac))));
    }

    RandomStream rng(seed);
    const Shape shape{1, resolution, resolution};
    Tensor x(shape);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();

    for (size_t k = 0; k < ts.size(); ++k) {
        const int t = ts[k];
        const int t_prev = k + 1 < ts.size() ? ts[k + 1] : -1;
        const double ab = schedule_.alpha_bar[static_cast<size_t>(t)];
        const double ab_prev = t_prev >= 0 ? schedule_.alpha_bar[static_cast<size_t>(t_prev)] : 1.0;
        const double beta = 1.0 - ab / ab_prev;

        Tensor eps;
        {
            Graph g(GraphMode::forward_only);
            eps = g.value(predict_noise(g, params, g.constant_ref(x), t, c));
        }
        // Posterior mean from the clipped x0 estimate; no noise on the final step.
        const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
        const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
        const double sigma = t_prev >= 0 ? std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab)) : 0.0;
        for (int64_t i = 0; i < x.numel(); ++i) {
            double x0 = (x[i] - std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(ab);
            x0 = std::clamp(x0, -1.0, 1.0);
            double next = t_prev >= 0 ? c0 * x0 + ct * x[i] : x0;
            if (sigma > 0.0) next += sigma * rng.normal();
            x[i] = static_cast<float>(next);
        }
        x.check_finite("sampler");
    }
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = std::clamp(x[i], -3.0F, 3.0F);
    return x;
}

}  // namespace hybrid
