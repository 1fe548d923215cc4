// SPDX-License-Identifier: Apache-2.0
#pragma once

// Random small programs over the tape primitives, evaluated two ways: on
// hybrid::Graph, and by a naive double-precision interpreter written from
// the operator definitions. Central differences of the interpreter are the
// gradient oracle.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "hybrid/graph.hpp"
#include "hybrid/params.hpp"
#include "hybrid/random.hpp"

namespace reference {

using hybrid::Shape;

struct DTensor {
    Shape shape;
    std::vector<double> v;
    int64_t numel() const { return static_cast<int64_t>(v.size()); }
};

enum class Op { conv, silu, relu, add_param, mul_param, pool, upsample, bias_broadcast, matmul, embedding, add_self };

struct Step {
    Op op;
    std::string param;
    std::string param2;
    int padding = 0;
    int64_t out_channels = 0;
    int64_t index = 0;
};

struct Program {
    Shape input_shape;
    std::map<std::string, hybrid::Tensor> params;
    std::vector<std::string> order;
    hybrid::Tensor input;
    std::vector<Step> steps;
    bool mse_head = false;
    hybrid::Tensor target;
};

inline hybrid::Tensor random_tensor(const Shape& s, hybrid::RandomStream& rng, double scale) {
    hybrid::Tensor t(s);
    for (int64_t i = 0; i < t.numel(); ++i) t[static_cast<size_t>(i)] = static_cast<float>(scale * rng.normal());
    return t;
}

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

/// Random program on [C,H,W]; relu is left out so finite differences never
/// straddle a kink.
inline Program make_program(uint64_t seed) {
    hybrid::RandomStream rng(seed);
    Program p;
    int64_t c = 1 + rng.uniform_int(0, 2);
    int64_t h = 2 * (1 + rng.uniform_int(0, 2));
    int64_t w = 2 * (1 + rng.uniform_int(0, 2));
    p.input_shape = {c, h, w};
    p.input = random_tensor(p.input_shape, rng, 1.0);
    int counter = 0;
    auto new_param = [&](const Shape& s, double scale) {
        std::string name = "p" + std::to_string(counter++);
        p.params.emplace(name, random_tensor(s, rng, scale));
        p.order.push_back(name);
        return name;
    };
    const int64_t n_steps = 2 + rng.uniform_int(0, 5);
    for (int64_t k = 0; k < n_steps; ++k) {
        Step st;
        st.op = static_cast<Op>(rng.uniform_int(0, 11));
        switch (st.op) {
            case Op::conv: {
                const int64_t kk = rng.uniform_int(0, 2) == 0 ? 1 : 3;
                st.padding = kk == 3 ? static_cast<int>(rng.uniform_int(0, 2)) : 0;
                if (kk == 3 && st.padding == 0 && (h < 3 || w < 3)) st.padding = 1;
                st.out_channels = 1 + rng.uniform_int(0, 3);
                st.param = new_param({st.out_channels, c, kk, kk}, 0.5);
                if (rng.uniform_int(0, 2) == 0) st.param2 = new_param({st.out_channels}, 0.3);
                h = h + 2 * st.padding - kk + 1;
                w = w + 2 * st.padding - kk + 1;
                c = st.out_channels;
                break;
            }
            case Op::relu:
                st.op = Op::silu;
                break;
            case Op::silu:
                break;
            case Op::add_param:
            case Op::mul_param:
                // Half the time bind an existing same-shaped parameter twice.
                for (const auto& name : p.order) {
                    if (p.params.at(name).shape() == Shape{c, h, w} && rng.uniform_int(0, 2) == 0) st.param = name;
                }
                if (st.param.empty()) st.param = new_param({c, h, w}, 0.7);
                break;
            case Op::pool:
                if (h % 2 != 0 || w % 2 != 0) {
                    st.op = Op::silu;
                    break;
                }
                h /= 2;
                w /= 2;
                break;
            case Op::upsample:
                if (h * w > 16) {
                    st.op = Op::silu;
                    break;
                }
                h *= 2;
                w *= 2;
                break;
            case Op::bias_broadcast:
                st.param = new_param({c, 1, 1}, 0.5);
                break;
            case Op::matmul:
                st.out_channels = 1 + rng.uniform_int(0, 3);
                st.param = new_param({st.out_channels, c}, 0.5);
                c = st.out_channels;
                break;
            case Op::embedding:
                st.index = rng.uniform_int(0, 3);
                st.param = new_param({3, c * h * w}, 0.5);
                break;
            case Op::add_self:
                break;
        }
        p.steps.push_back(st);
    }
    p.mse_head = rng.uniform_int(0, 2) == 0;
    if (p.mse_head) p.target = random_tensor({c, h, w}, rng, 1.0);
    return p;
}

/// Builds the program on a Graph; returns the scalar output.
inline hybrid::Var build(hybrid::Graph& g, const Program& p) {
    using hybrid::Var;
    Var x = g.constant_ref(p.input);
    auto P = [&](const std::string& name) { return g.parameter(name, p.params.at(name)); };
    for (const auto& st : p.steps) {
        const Shape s = g.shape(x);
        switch (st.op) {
            case Op::conv:
                x = st.param2.empty() ? g.conv2d(x, P(st.param), std::nullopt, st.padding)
                                      : g.conv2d(x, P(st.param), P(st.param2), st.padding);
                break;
            case Op::silu: x = g.silu(x); break;
            case Op::relu: x = g.relu(x); break;
            case Op::add_param: x = g.add(x, P(st.param)); break;
            case Op::mul_param: x = g.mul(x, P(st.param)); break;
            case Op::pool: x = g.avg_pool2x2(x); break;
            case Op::upsample: x = hybrid::upsample2x(g, x); break;
            case Op::bias_broadcast: x = g.add(x, g.broadcast(P(st.param), s)); break;
            case Op::matmul: {
                Var flat = g.reshape(x, Shape{s[0], s[1] * s[2]});
                x = g.reshape(g.matmul(P(st.param), flat), Shape{st.out_channels, s[1], s[2]});
                break;
            }
            case Op::embedding: x = g.add(x, g.reshape(g.embedding(P(st.param), st.index), s)); break;
            case Op::add_self: x = g.add(x, x); break;
        }
    }
    return p.mse_head ? g.mse(x, g.constant_ref(p.target)) : g.mean(x);
}

inline DTensor to_d(const hybrid::Tensor& t) {
    DTensor d{t.shape(), {}};
    for (int64_t i = 0; i < t.numel(); ++i) d.v.push_back(t[static_cast<size_t>(i)]);
    return d;
}

/// Naive double evaluation with parameters taken from `values`.
inline double evaluate(const Program& p, const std::map<std::string, DTensor>& values) {
    DTensor x = to_d(p.input);
    for (const auto& st : p.steps) {
        const int64_t c = x.shape[0], h = x.shape[1], w = x.shape[2];
        auto at = [&](const DTensor& t, int64_t a, int64_t b, int64_t e) { return t.v[static_cast<size_t>((a * h + b) * w + e)]; };
        switch (st.op) {
            case Op::conv: {
                const DTensor& k = values.at(st.param);
                const int64_t co = k.shape[0], kh = k.shape[2], kw = k.shape[3];
                const int64_t oh = h + 2 * st.padding - kh + 1, ow = w + 2 * st.padding - kw + 1;
                DTensor y{{co, oh, ow}, std::vector<double>(static_cast<size_t>(co * oh * ow), 0.0)};
                for (int64_t o = 0; o < co; ++o)
                    for (int64_t yy = 0; yy < oh; ++yy)
                        for (int64_t xx = 0; xx < ow; ++xx) {
                            double s = st.param2.empty() ? 0.0 : values.at(st.param2).v[static_cast<size_t>(o)];
                            for (int64_t i = 0; i < c; ++i)
                                for (int64_t dy = 0; dy < kh; ++dy)
                                    for (int64_t dx = 0; dx < kw; ++dx) {
                                        const int64_t sy = yy + dy - st.padding, sx = xx + dx - st.padding;
                                        if (sy < 0 || sx < 0 || sy >= h || sx >= w) continue;
                                        s += k.v[static_cast<size_t>(((o * c + i) * kh + dy) * kw + dx)] * at(x, i, sy, sx);
                                    }
                            y.v[static_cast<size_t>((o * oh + yy) * ow + xx)] = s;
                        }
                x = y;
                break;
            }
            case Op::silu:
                for (auto& e : x.v) e = e / (1.0 + std::exp(-e));
                break;
            case Op::relu:
                for (auto& e : x.v) e = std::max(e, 0.0);
                break;
            case Op::add_param:
                for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += values.at(st.param).v[i];
                break;
            case Op::mul_param:
                for (size_t i = 0; i < x.v.size(); ++i) x.v[i] *= values.at(st.param).v[i];
                break;
            case Op::pool: {
                DTensor y{{c, h / 2, w / 2}, {}};
                for (int64_t i = 0; i < c; ++i)
                    for (int64_t yy = 0; yy < h / 2; ++yy)
                        for (int64_t xx = 0; xx < w / 2; ++xx)
                            y.v.push_back(0.25 * (at(x, i, 2 * yy, 2 * xx) + at(x, i, 2 * yy + 1, 2 * xx) +
                                                  at(x, i, 2 * yy, 2 * xx + 1) + at(x, i, 2 * yy + 1, 2 * xx + 1)));
                x = y;
                break;
            }
            case Op::upsample: {
                DTensor y{{c, 2 * h, 2 * w}, {}};
                for (int64_t i = 0; i < c; ++i)
                    for (int64_t yy = 0; yy < 2 * h; ++yy)
                        for (int64_t xx = 0; xx < 2 * w; ++xx) y.v.push_back(at(x, i, yy / 2, xx / 2));
                x = y;
                break;
            }
            case Op::bias_broadcast:
                for (int64_t i = 0; i < c; ++i)
                    for (int64_t j = 0; j < h * w; ++j) x.v[static_cast<size_t>(i * h * w + j)] += values.at(st.param).v[static_cast<size_t>(i)];
                break;
            case Op::matmul: {
                const DTensor& m = values.at(st.param);
                const int64_t co = m.shape[0];
                DTensor y{{co, h, w}, std::vector<double>(static_cast<size_t>(co * h * w), 0.0)};
                for (int64_t o = 0; o < co; ++o)
                    for (int64_t j = 0; j < h * w; ++j) {
                        double s = 0.0;
                        for (int64_t i = 0; i < c; ++i) s += m.v[static_cast<size_t>(o * c + i)] * x.v[static_cast<size_t>(i * h * w + j)];
                        y.v[static_cast<size_t>(o * h * w + j)] = s;
                    }
                x = y;
                break;
            }
            case Op::embedding: {
                const DTensor& t = values.at(st.param);
                const int64_t d = t.shape[1];
                for (int64_t j = 0; j < d; ++j) x.v[static_cast<size_t>(j)] += t.v[static_cast<size_t>(st.index * d + j)];
                break;
            }
            case Op::add_self:
                for (auto& e : x.v) e += e;
                break;
        }
    }
    double s = 0.0;
    if (p.mse_head) {
        for (size_t i = 0; i < x.v.size(); ++i) {
            const double d = x.v[i] - p.target[i];
            s += d * d;
        }
    } else {
        for (double e : x.v) s += e;
    }
    return s / static_cast<double>(x.v.size());
}

/// Central-difference gradient of the double interpreter.
inline std::map<std::string, std::vector<double>> numeric_gradient(const Program& p, double step = 1e-5) {
    std::map<std::string, DTensor> values;
    for (const auto& [name, t] : p.params) values.emplace(name, to_d(t));
    std::map<std::string, std::vector<double>> out;
    for (auto& [name, t] : values) {
        std::vector<double> g(t.v.size());
        for (size_t i = 0; i < t.v.size(); ++i) {
            const double orig = t.v[i];
            t.v[i] = orig + step;
            const double up = evaluate(p, values);
            t.v[i] = orig - step;
            const double down = evaluate(p, values);
            t.v[i] = orig;
            g[i] = (up - down) / (2.0 * step);
        }
        out.emplace(name, std::move(g));
    }
    return out;
}

/// Max over components of |g - fd| / max(|fd|, floor), floor = 1e-3 * max|fd| + 1e-7.
inline double max_relative_error(const std::map<std::string, hybrid::Tensor>& grads,
                                 const std::map<std::string, std::vector<double>>& fd) {
    double scale = 0.0;
    for (const auto& [name, g] : fd)
        for (double v : g) scale = std::max(scale, std::abs(v));
    const double floor = 1e-3 * scale + 1e-7;
    double worst = 0.0;
    for (const auto& [name, g] : fd) {
        auto it = grads.find(name);
        for (size_t i = 0; i < g.size(); ++i) {
            const double got = it == grads.end() ? 0.0 : it->second[i];
            worst = std::max(worst, std::abs(got - g[i]) / std::max(std::abs(g[i]), floor));
        }
    }
    return worst;
}

}  // namespace reference
