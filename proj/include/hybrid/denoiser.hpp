// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "hybrid/diffusion.hpp"
#include "hybrid/graph.hpp"
#include "hybrid/params.hpp"

namespace hybrid {

struct DenoiserConfig {
    int channels = 16;
    int num_classes = 4;
    /// Rank of the adapters on the 1x1 projections; 0 disables them.
    int lora_rank = 4;
    int time_bins = 32;
    int t_max = 1000;
    /// Blocks at the coarsest level.
    int mid_blocks = 4;
    /// Coordinate planes in pixels from the centre (true) or normalized to
    /// the image extent (false). The two agree at full resolution.
    bool pixel_coordinates = false;
};

/// [2,H,W] planes of pixel-centre x and y coordinates measured from the
/// image centre, divided by `half_extent` pixels.
Tensor coordinate_planes(int64_t h, int64_t w, double half_extent_x, double half_extent_y);

/// Small conditional noise predictor with a two-level U-shaped layout:
///
///   conv_in -> block -> pool -> block -> pool -> mid_blocks x block
///           -> up + skip -> block -> up + skip -> conv_out
///
/// conv_in also sees two normalized coordinate planes through its own
/// convolution. Every block adds a per-channel bias projected from the condition
/// embedding, then applies conv3x3 -> silu -> conv1x1 with a residual.
/// Nothing depends on the spatial size, so any H, W divisible by 4 works.
class Denoiser {
public:
    static constexpr int kFullResolution = 32;

    explicit Denoiser(DenoiserConfig config = {});

    const DenoiserConfig& config() const { return config_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    /// Condition id of the personalization token (one past the prior classes).
    int subject_token() const { return config_.num_classes; }
    int time_bin(int t) const;
    int num_blocks() const { return config_.mid_blocks + 3; }
    /// Resolution level of block b (0 = input resolution).
    int block_level(int b) const;

    /// Fresh base parameters, all trainable, no adapters.
    ParameterSet init_params(uint64_t seed) const;
    /// Adds adapter factors (A zero, B random) for every block projection,
    /// freezes the base and marks adapters plus the subject embedding
    /// trainable. No-op on the base when lora_rank == 0 except for the
    /// trainable flags, which then cover every tensor.
    void attach_lora(ParameterSet& params, uint64_t seed) const;
    /// Copies the embedding of `class_id` into the subject token.
    void init_subject_token(ParameterSet& params, int class_id) const;

    Var predict_noise(Graph& g, const ParameterSet& params, Var x_t, int t, int c) const;
    /// Mean squared error between predicted and true noise at timestep t.
    Var loss(Graph& g, const ParameterSet& params, const Tensor& x0, int c, int t, const Tensor& eps) const;
    /// Forward-only evaluation of loss(); optionally reports the ledger.
    double loss_value(const ParameterSet& params, const Tensor& x0, int c, int t, const Tensor& eps,
                      ActivationLedger* ledger = nullptr) const;

    /// Ancestral sampling over `steps` evenly spaced timesteps at
    /// resolution x resolution. Deterministic in `seed`; output clamped to [-3, 3].
    Tensor sample(const ParameterSet& params, int c, int steps, uint64_t seed,
                  int64_t resolution = kFullResolution) const;

    static std::string block_name(int b, const std::string& leaf);

private:
    void check_condition(int c) const;

    DenoiserConfig config_;
    NoiseSchedule schedule_;
};

}  // namespace hybrid
