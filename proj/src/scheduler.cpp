// SPDX-License-Identifier: Apache-2.0
#include "hybrid/scheduler.hpp"

#include <cmath>
#include <stdexcept>


namespace hybrid {

std::string_view to_string(SelectorMode mode) {
    switch (mode) {
        case SelectorMode::tap: return "TAP";
        case SelectorMode::dtap: return "DTAP";
        case SelectorMode::always_bp: return "ALWAYS_BP";
        case SelectorMode::always_zo: return "ALWAYS_ZO";
        case SelectorMode::uniform_random: return "UNIFORM_RANDOM";
        case SelectorMode::reversed: return "REVERSED";
    }
    return "?";
}

std::string_view to_string(Branch branch) { return branch == Branch::bp_low ? "BP_LOW" : "ZO_HIGH"; }

SelectorMode parse_selector_mode(std::string_view text) {
    for (auto m : {SelectorMode::tap, SelectorMode::dtap, SelectorMode::always_bp, SelectorMode::always_zo,
                   SelectorMode::uniform_random, SelectorMode::reversed}) {
        if (text == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown selector mode '" + std::string(text) +
                                "' (expected TAP, DTAP, ALWAYS_BP, ALWAYS_ZO, UNIFORM_RANDOM or REVERSED)");
}

void SelectorConfig::validate() const {
    if (!(t_max > 0.0)) throw std::invalid_argument("selector t_max must be positive");
    if (!(i_max > 0.0)) throw std::invalid_argument("selector i_max must be positive");
    if (!(t_mid > 0.0 && t_mid < t_max)) throw std::invalid_argument("selector t_mid must lie in (0, t_max)");
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double tap_probability(double t, const SelectorConfig& cfg) { return stable_sigmoid(cfg.k * (t - cfg.t_mid)); }

double t_dyn(double i, const SelectorConfig& cfg) {
    const double t_start = cfg.t_max;
    const double t_end = 2.0 * cfg.t_mid - cfg.t_max;
    return t_start + (i / cfg.i_max) * (t_end - t_start);
}

double dtap_probability(double i, double t, const SelectorConfig& cfg) {
    return stable_sigmoid(cfg.k * (t - t_dyn(i, cfg)));
}

double zo_probability(double i, double t, const SelectorConfig& cfg) {
    switch (cfg.mode) {
        case SelectorMode::tap: return tap_probability(t, cfg);
        case SelectorMode::dtap: return dtap_probability(i, t, cfg);
        case SelectorMode::reversed: return stable_sigmoid(-cfg.k * (t - t_dyn(i, cfg)));
        case SelectorMode::always_bp: return 0.0;
        case SelectorMode::always_zo: return 1.0;
        case SelectorMode::uniform_random: return 0.5;
    }
    return 0.0;
}

Branch decide(double draw, double p_zo) { return draw > p_zo ? Branch::bp_low : Branch::zo_high; }

Branch select_branch(int64_t i, double t, const SelectorConfig& cfg, RandomStream& rng) {
    if (cfg.mode == SelectorMode::always_bp) return Branch::bp_low;
    if (cfg.mode == SelectorMode::always_zo) return Branch::zo_high;
    return decide(rng.uniform(), zo_probability(static_cast<double>(i), t, cfg));
}

}  // namespace hybrid
