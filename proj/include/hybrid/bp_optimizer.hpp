// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "hybrid/denoiser.hpp"
#include "hybrid/graph.hpp"
#include "hybrid/params.hpp"

namespace hybrid {

struct BpConfig {
    double eta = 0.05;
    double resize_ratio = 0.5;
    /// Maximum global gradient norm; disabled when empty.
    std::optional<double> grad_clip;

    void validate() const;
};

struct BpStepResult {
    double loss = 0.0;
    double grad_norm = 0.0;
    bool clipped = false;
    ActivationLedger ledger;
    Shape input_shape;
};

/// Builds a scalar loss in `g` from the bound parameters.
using GraphLoss = std::function<Var(Graph& g, const ParameterSet& params)>;

/// theta <- theta - eta * grad over the trainable tensors, after optional
/// clipping of the global gradient norm. Returns the pre-clip norm.
double apply_gradient_step(ParameterSet& params, const std::map<std::string, Tensor>& grads, double eta,
                           std::optional<double> grad_clip, bool* clipped = nullptr);

/// Record-mode forward, backward and plain gradient-descent update. Any
/// NonFiniteValue propagates before the parameters are touched.
BpStepResult bp_step(ParameterSet& params, const GraphLoss& loss, const BpConfig& cfg);

/// The low-resolution branch: downsample x by cfg.resize_ratio, draw the
/// noise target at that resolution from `noise_seed`, and take one step.
BpStepResult bp_step(const Denoiser& model, ParameterSet& params, const Tensor& x, int c, int t, const BpConfig& cfg,
                     uint64_t noise_seed);

/// Standard-normal tensor of `shape` regenerated from `seed`.
Tensor seeded_normal(const Shape& shape, uint64_t seed);

}  // namespace hybrid
