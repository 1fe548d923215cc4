// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hybrid/tensor.hpp"

namespace hybrid {

class InvalidTimestep : public std::out_of_range {
public:
    InvalidTimestep(int t, int t_max)
        : std::out_of_range("timestep " + std::to_string(t) + " outside [0, " + std::to_string(t_max) + ")") {}
};

/// Per-timestep DDPM coefficients.
struct NoiseSchedule {
    int t_max = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    /// Linear betas from `beta_start` to `beta_end` over `t_max` steps.
    static NoiseSchedule linear(int t_max, double beta_start = 1e-4, double beta_end = 0.02);

    void check(int t) const {
        if (t < 0 || t >= t_max) throw InvalidTimestep(t, t_max);
    }
};

/// x_t = sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps.
Tensor noisify(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps);
/// Same closed form with an explicit alpha_bar, for boundary checks.
Tensor noisify_with(double alpha_bar, const Tensor& x0, const Tensor& eps);

/// Output extent for a resize ratio: nearest integer, at least 1.
int64_t resized_extent(int64_t extent, double ratio);

/// Area-weighted resampling of the two trailing (spatial) axes by `ratio`
/// in (0, 1]. Each output cell is the overlap-weighted mean of the input
/// cells it covers. ratio == 1 returns the input unchanged.
Tensor downsample(const Tensor& x, double ratio);
/// Area-weighted resampling to an explicit output size.
Tensor resample_area(const Tensor& x, int64_t out_h, int64_t out_w);

}  // namespace hybrid
