// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hybrid/params.hpp"
#include "hybrid/random.hpp"

namespace hybrid {

struct ZoConfig {
    /// Probe scale; multiplied by the RMS of the trainable parameters when
    /// `scale_epsilon_by_rms` is set.
    double epsilon = 1e-3;
    double alpha = 1e-4;
    int num_perturbations = 4;
    /// Accumulation weights; empty means uniform 1/N.
    std::vector<double> weights;
    bool scale_epsilon_by_rms = true;

    void validate() const;
    double weight(int n) const;
};

/// Forward-only loss of the current parameters.
using LossFn = std::function<double(const ParameterSet&)>;

/// Adds scale * z(seed) to the trainable parameters in place, where z is
/// the standard normal vector regenerated element by element from `seed`
/// in canonical flattening order. Allocates nothing.
void perturb_in_place(ParameterSet& params, uint64_t seed, double scale);

/// Root-mean-square of the trainable parameters.
double trainable_rms(const ParameterSet& params);
/// Probe scale actually used for `params`.
double effective_epsilon(const ParameterSet& params, const ZoConfig& cfg);

struct ProjectedGrad {
    double g_proj = 0.0;
    double loss_plus = 0.0;
    double loss_minus = 0.0;
};

/// Two-point difference quotient [L(theta + eps z) - L(theta - eps z)] / (2 eps)
/// with z regenerated from `seed`. Parameters are perturbed in place
/// (+eps z, -2 eps z, +eps z) and are restored on exit, including when a
/// probe throws NonFiniteValue or returns a non-finite loss (rethrown as
/// NonFiniteValue).
ProjectedGrad estimate_projected_grad(ParameterSet& params, const LossFn& loss_fn, uint64_t seed, double eps);

struct ZoStepResult {
    std::vector<uint64_t> seeds;
    std::vector<double> g_proj;
    /// w_n * g_proj^(n), the scalars replayed in the update sweep.
    std::vector<double> coefficients;
    double eps = 0.0;
    /// Mean of the probe losses.
    double loss = 0.0;
};

/// One zeroth-order step: N probe pairs with seeds drawn from `rng`, then
/// theta <- theta - alpha * sum_n w_n g_proj^(n) z^(n), applied by
/// replaying each z^(n) once. A failed probe aborts the step with the
/// parameters restored and nothing applied.
ZoStepResult accumulate_step(ParameterSet& params, const LossFn& loss_fn, const ZoConfig& cfg, RandomStream& rng);

/// Seed of perturbation n within a step whose base seed is `base`.
uint64_t perturbation_seed(uint64_t base, int n);

}  // namespace hybrid
