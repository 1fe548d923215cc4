// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense zeroth-order reference: materializes every perturbation vector and
// the explicit gradient estimate in double precision.

#include <cmath>
#include <functional>
#include <vector>

#include "hybrid/random.hpp"

namespace reference {

using DenseLoss = std::function<double(const std::vector<double>&)>;

inline std::vector<double> dense_z(uint64_t seed, size_t d) {
    std::vector<double> z(d);
    for (size_t i = 0; i < d; ++i) z[i] = hybrid::normal_at(seed, i);
    return z;
}

/// theta - alpha * sum_n w_n g_n z_n with g_n the two-point quotient.
inline std::vector<double> dense_zo_step(std::vector<double> theta, const DenseLoss& loss,
                                         const std::vector<uint64_t>& seeds, const std::vector<double>& weights,
                                         double eps, double alpha) {
    const size_t d = theta.size();
    std::vector<double> ghat(d, 0.0);
    for (size_t n = 0; n < seeds.size(); ++n) {
        const auto z = dense_z(seeds[n], d);
        std::vector<double> plus = theta, minus = theta;
        for (size_t i = 0; i < d; ++i) {
            plus[i] += eps * z[i];
            minus[i] -= eps * z[i];
        }
        const double g = (loss(plus) - loss(minus)) / (2.0 * eps);
        for (size_t i = 0; i < d; ++i) ghat[i] += weights[n] * g * z[i];
    }
    for (size_t i = 0; i < d; ++i) theta[i] -= alpha * ghat[i];
    return theta;
}

}  // namespace reference
