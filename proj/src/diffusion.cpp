// SPDX-License-Identifier: Apache-2.0
#include "hybrid/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace hybrid {

NoiseSchedule NoiseSchedule::linear(int t_max, double beta_start, double beta_end) {
    if (t_max < 1) throw std::invalid_argument("t_max must be positive");
    NoiseSchedule s;
    s.t_max = t_max;
    s.beta.resize(static_cast<size_t>(t_max));
    s.alpha.resize(static_cast<size_t>(t_max));
    s.alpha_bar.resize(static_cast<size_t>(t_max));
    double prod = 1.0;
    for (int t = 0; t < t_max; ++t) {
        const double frac = t_max == 1 ? 0.0 : static_cast<double>(t) / (t_max - 1);
        const auto i = static_cast<size_t>(t);
        s.beta[i] = beta_start + frac * (beta_end - beta_start);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

Tensor noisify_with(double alpha_bar, const Tensor& x0, const Tensor& eps) {
    if (x0.shape() != eps.shape()) {
        throw ShapeError("noise shape " + shape_str(eps.shape()) + " differs from image shape " + shape_str(x0.shape()));
    }
    const double a = std::sqrt(alpha_bar);
    const double b = std::sqrt(1.0 - alpha_bar);
    Tensor out(x0.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
    return out;
}

Tensor noisify(const NoiseSchedule& schedule, const Tensor& x0, int t, const Tensor& eps) {
    schedule.check(t);
    return noisify_with(schedule.alpha_bar[static_cast<size_t>(t)], x0, eps);
}

int64_t resized_extent(int64_t extent, double ratio) {
    return std::max<int64_t>(1, std::llround(static_cast<double>(extent) * ratio));
}

namespace {

// Dense [out, in] overlap weights for mapping `in` cells onto `out` cells of
// equal total length; each row sums to 1.
std::vector<double> area_weights(int64_t in, int64_t out) {
    std::vector<double> w(static_cast<size_t>(in * out), 0.0);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        const double lo = o * scale;
        const double hi = (o + 1) * scale;
        for (auto i = static_cast<int64_t>(std::floor(lo)); i < std::min<int64_t>(in, static_cast<int64_t>(std::ceil(hi))); ++i) {
            const double overlap = std::min<double>(hi, i + 1) - std::max<double>(lo, i);
            if (overlap > 0) w[static_cast<size_t>(o * in + i)] = overlap / scale;
        }
    }
    return w;
}

}  // namespace

Tensor resample_area(const Tensor& x, int64_t out_h, int64_t out_w) {
    if (x.rank() < 2) throw ShapeError("resample needs at least two spatial axes");
    const int64_t h = x.dim(x.rank() - 2);
    const int64_t w = x.dim(x.rank() - 1);
    if (out_h < 1 || out_w < 1) throw ShapeError("resample target must be at least 1x1");
    if (out_h == h && out_w == w) return x;
    const int64_t planes = x.numel() / (h * w);
    const auto wy = area_weights(h, out_h);
    const auto wx = area_weights(w, out_w);

    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    Tensor out(out_shape);
    std::vector<double> rows(static_cast<size_t>(out_h * w));
    for (int64_t p = 0; p < planes; ++p) {
        const float* src = x.ptr() + p * h * w;
        std::fill(rows.begin(), rows.end(), 0.0);
        for (int64_t oy = 0; oy < out_h; ++oy) {
            for (int64_t y = 0; y < h; ++y) {
                const double c = wy[static_cast<size_t>(oy * h + y)];
                if (c == 0.0) continue;
                for (int64_t xx = 0; xx < w; ++xx) rows[static_cast<size_t>(oy * w + xx)] += c * src[y * w + xx];
            }
        }
        float* dst = out.ptr() + p * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            for (int64_t ox = 0; ox < out_w; ++ox) {
                double s = 0.0;
                for (int64_t xx = 0; xx < w; ++xx) s += wx[static_cast<size_t>(ox * w + xx)] * rows[static_cast<size_t>(oy * w + xx)];
                dst[oy * out_w + ox] = static_cast<float>(s);
            }
        }
    }
    return out;
}

Tensor downsample(const Tensor& x, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw std::invalid_argument("resize ratio must lie in (0, 1]");
    if (x.rank() < 2) throw ShapeError("downsample needs at least two spatial axes");
    if (ratio == 1.0) return x;
    return resample_area(x, resized_extent(x.dim(x.rank() - 2), ratio), resized_extent(x.dim(x.rank() - 1), ratio));
}

}  // namespace hybrid
