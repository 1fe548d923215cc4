// SPDX-License-Identifier: Apache-2.0
#include "hybrid/zo_optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace hybrid {

void ZoConfig::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("zo.epsilon must be positive");
    if (!(alpha >= 0.0)) throw std::invalid_argument("zo.alpha must be non-negative");
    if (num_perturbations < 1) throw std::invalid_argument("zo.num_perturbations must be at least 1");
    if (!weights.empty()) {
        if (static_cast<int>(weights.size()) != num_perturbations) {
            throw std::invalid_argument("zo weights must have one entry per perturbation");
        }
        double sum = 0.0;
        for (double w : weights) sum += w;
        if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("zo weights must sum to 1");
    }
}

double ZoConfig::weight(int n) const {
    return weights.empty() ? 1.0 / num_perturbations : weights.at(static_cast<size_t>(n));
}

void perturb_in_place(ParameterSet& params, uint64_t seed, double scale) {
    uint64_t index = 0;
    params.for_each_trainable([&](std::span<float> d) {
        for (float& v : d) v = static_cast<float>(v + scale * normal_at(seed, index++));
    });
}

double trainable_rms(const ParameterSet& params) {
    double sum = 0.0;
    int64_t n = 0;
    params.for_each_trainable([&](std::span<const float> d) {
        for (float v : d) sum += static_cast<double>(v) * v;
        n += static_cast<int64_t>(d.size());
    });
    return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

double effective_epsilon(const ParameterSet& params, const ZoConfig& cfg) {
    if (!cfg.scale_epsilon_by_rms) return cfg.epsilon;
    const double rms = trainable_rms(params);
    return rms > 0.0 ? cfg.epsilon * rms : cfg.epsilon;
}

uint64_t perturbation_seed(uint64_t base, int n) { return hash_combine(base, static_cast<uint64_t>(n)); }

ProjectedGrad estimate_projected_grad(ParameterSet& params, const LossFn& loss_fn, uint64_t seed, double eps) {
    ProjectedGrad r;
    perturb_in_place(params, seed, eps);
    try {
        r.loss_plus = loss_fn(params);
    } catch (...) {
        perturb_in_place(params, seed, -eps);
        throw;
    }
    perturb_in_place(params, seed, -2.0 * eps);
    try {
        r.loss_minus = loss_fn(params);
    } catch (...) {
        perturb_in_place(params, seed, eps);
        throw;
    }
    perturb_in_place(params, seed, eps);
    if (!std::isfinite(r.loss_plus) || !std::isfinite(r.loss_minus)) throw NonFiniteValue("zeroth-order probe");
    r.g_proj = (r.loss_plus - r.loss_minus) / (2.0 * eps);
    return r;
}

ZoStepResult accumulate_step(ParameterSet& params, const LossFn& loss_fn, const ZoConfig& cfg, RandomStream& rng) {
    cfg.validate();
    ZoStepResult out;
    out.eps = effective_epsilon(params, cfg);
    const uint64_t base = rng.next_u64();
    double loss_sum = 0.0;
    for (int n = 0; n < cfg.num_perturbations; ++n) {
        const uint64_t seed = perturbation_seed(base, n);
        const ProjectedGrad pg = estimate_projected_grad(params, loss_fn, seed, out.eps);
        out.seeds.push_back(seed);
        out.g_proj.push_back(pg.g_proj);
        out.coefficients.push_back(cfg.weight(n) * pg.g_proj);
        loss_sum += 0.5 * (pg.loss_plus + pg.loss_minus);
    }
    out.loss = loss_sum / cfg.num_perturbations;
    for (size_t n = 0; n < out.seeds.size(); ++n) {
        if (cfg.alpha != 0.0 && out.coefficients[n] != 0.0) {
            perturb_in_place(params, out.seeds[n], -cfg.alpha * out.coefficients[n]);
        }
    }
    return out;
}

}  // namespace hybrid
