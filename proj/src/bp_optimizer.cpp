// SPDX-License-Identifier: Apache-2.0
#include "hybrid/bp_optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "hybrid/diffusion.hpp"
#include "hybrid/random.hpp"

namespace hybrid {

void BpConfig::validate() const {
    if (!(eta >= 0.0)) throw std::invalid_argument("bp.eta must be non-negative");
    if (!(resize_ratio > 0.0 && resize_ratio <= 1.0)) throw std::invalid_argument("bp.resize_ratio must lie in (0, 1]");
    if (grad_clip && !(*grad_clip > 0.0)) throw std::invalid_argument("bp.grad_clip must be positive");
}

Tensor seeded_normal(const Shape& shape, uint64_t seed) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal_at(seed, static_cast<uint64_t>(i));
    return t;
}

double apply_gradient_step(ParameterSet& params, const std::map<std::string, Tensor>& grads, double eta,
                           std::optional<double> grad_clip, bool* clipped) {
    double sq = 0.0;
    for (const auto& e : params.entries()) {
        if (!e.trainable) continue;
        auto it = grads.find(e.name);
        if (it == grads.end()) continue;
        for (float v : it->second.data()) sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    double scale = eta;
    const bool clip = grad_clip && norm > *grad_clip;
    if (clip) scale *= *grad_clip / norm;
    if (clipped != nullptr) *clipped = clip;
    if (scale == 0.0) return norm;
    for (auto& e : params.entries()) {
        if (!e.trainable) continue;
        auto it = grads.find(e.name);
        if (it == grads.end()) continue;
        const Tensor& g = it->second;
        if (g.shape() != e.value.shape()) throw TapeCorrupt("gradient shape mismatch for " + e.name);
        for (int64_t k = 0; k < g.numel(); ++k) e.value[k] = static_cast<float>(e.value[k] - scale * g[k]);
    }
    return norm;
}

BpStepResult bp_step(ParameterSet& params, const GraphLoss& loss, const BpConfig& cfg) {
    cfg.validate();
    BpStepResult r;
    Graph g(GraphMode::record);
    Var l = loss(g, params);
    r.loss = g.value(l).item();
    r.ledger = g.ledger();
    const auto grads = g.backward(l);
    r.grad_norm = apply_gradient_step(params, grads, cfg.eta, cfg.grad_clip, &r.clipped);
    return r;
}

BpStepResult bp_step(const Denoiser& model, ParameterSet& params, const Tensor& x, int c, int t, const BpConfig& cfg,
                     uint64_t noise_seed) {
    const Tensor x_low = downsample(x, cfg.resize_ratio);
    const Tensor eps = seeded_normal(x_low.shape(), noise_seed);
    BpStepResult r = bp_step(
        params, [&](Graph& g, const ParameterSet& p) { return model.loss(g, p, x_low, c, t, eps); }, cfg);
    r.input_shape = x_low.shape();
    return r;
}

}  // namespace hybrid
