// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "hybrid/random.hpp"

namespace hybrid {

enum class SelectorMode { tap, dtap, always_bp, always_zo, uniform_random, reversed };
enum class Branch { bp_low, zo_high };

std::string_view to_string(SelectorMode mode);
std::string_view to_string(Branch branch);
SelectorMode parse_selector_mode(std::string_view text);

/// Hyperparameters of the timestep-aware selector.
struct SelectorConfig {
    double k = 0.05;
    double t_mid = 750.0;
    double t_max = 1000.0;
    double i_max = 1000.0;
    SelectorMode mode = SelectorMode::dtap;

    /// Throws std::invalid_argument unless t_max > 0, i_max > 0, 0 < t_mid < t_max.
    void validate() const;
    /// True when the dynamic midpoint would go below zero (2 t_mid < t_max).
    bool end_midpoint_negative() const { return 2.0 * t_mid - t_max < 0.0; }
};

/// Logistic function in the overflow-free split form.
double stable_sigmoid(double x);

/// Probability of the zeroth-order branch with a fixed midpoint.
double tap_probability(double t, const SelectorConfig& cfg);
/// Midpoint sliding linearly from t_max (i = 0) to 2 t_mid - t_max (i = i_max).
double t_dyn(double i, const SelectorConfig& cfg);
/// Probability of the zeroth-order branch with the sliding midpoint.
double dtap_probability(double i, double t, const SelectorConfig& cfg);
/// Probability used by `mode` (REVERSED negates k; fixed modes give 0 or 1;
/// UNIFORM_RANDOM gives 0.5).
double zo_probability(double i, double t, const SelectorConfig& cfg);

/// One branch decision: BP-low when a uniform draw from `rng` exceeds p,
/// ZO-high otherwise (ties go to ZO). ALWAYS_BP / ALWAYS_ZO return without
/// drawing. `rng` must be the stream dedicated to selection.
Branch select_branch(int64_t i, double t, const SelectorConfig& cfg, RandomStream& rng);
/// Same decision for an explicit uniform draw.
Branch decide(double draw, double p_zo);

}  // namespace hybrid
