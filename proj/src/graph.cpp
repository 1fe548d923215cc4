// SPDX-License-Identifier: Apache-2.0
#include "hybrid/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hybrid {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

float sigmoid(float x) {
    if (x >= 0.0F) return 1.0F / (1.0F + std::exp(-x));
    const float e = std::exp(x);
    return e / (1.0F + e);
}

// Visits (output index, input index) pairs of a broadcast in output order.
template <typename F>
void for_each_broadcast(const Shape& in, const Shape& out, F&& f) {
    const size_t rank = out.size();
    std::vector<int64_t> in_stride(rank, 0);
    int64_t s = 1;
    for (size_t d = rank; d-- > 0;) {
        in_stride[d] = in[d] == 1 ? 0 : s;
        s *= in[d];
    }
    std::vector<int64_t> coord(rank, 0);
    const int64_t n = shape_numel(out);
    const int64_t inner = out[rank - 1];
    const int64_t inner_stride = in_stride[rank - 1];
    int64_t src = 0;
    for (int64_t o = 0; o < n; o += inner) {
        for (int64_t k = 0; k < inner; ++k) f(o + k, src + k * inner_stride);
        // Advance the odometer over all but the innermost axis.
        for (size_t d = rank - 1; d-- > 0;) {
            src += in_stride[d];
            if (++coord[d] < out[d]) break;
            src -= in_stride[d] * coord[d];
            coord[d] = 0;
        }
    }
}

// Double-precision dot product with fixed lane-wise partial sums, so the
// result is independent of how the compiler vectorizes it.
double dot(const float* a, const float* b, int64_t n) {
    constexpr int kLanes = 8;
    double part[kLanes] = {};
    int64_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        for (int k = 0; k < kLanes; ++k) part[k] += static_cast<double>(a[i + k]) * b[i + k];
    }
    for (; i < n; ++i) part[0] += static_cast<double>(a[i]) * b[i];
    double s = 0.0;
    for (double p : part) s += p;
    return s;
}

struct ConvGeom {
    int64_t cin, h, w, cout, kh, kw, ho, wo, pad;
    // Padded input width; outputs are computed in rows of this width and the
    // trailing (kw - 1) columns of each row are discarded.
    int64_t wp() const { return w + 2 * pad; }
    int64_t hp() const { return h + 2 * pad; }
};

// Copies x [C,H,W] into a zero-padded [C,hp,wp] buffer.
std::vector<float> pad_planes(const ConvGeom& c, const float* x) {
    std::vector<float> out(static_cast<size_t>(c.cin * c.hp() * c.wp()), 0.0F);
    for (int64_t ic = 0; ic < c.cin; ++ic) {
        for (int64_t y = 0; y < c.h; ++y) {
            std::copy_n(x + (ic * c.h + y) * c.w, c.w, out.data() + (ic * c.hp() + y + c.pad) * c.wp() + c.pad);
        }
    }
    return out;
}

// acc[i] += sum_k wv[k] * src[i + off[k]] over a contiguous span.
void accumulate_taps(double* acc, const float* src, const double* wv, const int64_t* off, int64_t taps, int64_t span) {
    if (taps == 9) {
        for (int64_t i = 0; i < span; ++i) {
            double s = acc[i];
            for (int k = 0; k < 9; ++k) s += wv[k] * src[i + off[k]];
            acc[i] = s;
        }
        return;
    }
    for (int64_t k = 0; k < taps; ++k) {
        const float* p = src + off[k];
        for (int64_t i = 0; i < span; ++i) acc[i] += wv[k] * p[i];
    }
}

void conv_forward(const ConvGeom& c, const float* x, const float* w, const float* bias, float* out) {
    const auto xp = pad_planes(c, x);
    const int64_t wp = c.wp();
    const int64_t plane = c.hp() * wp;
    const int64_t span = (c.ho - 1) * wp + c.wo;
    const int64_t taps = c.kh * c.kw;
    std::vector<int64_t> off(static_cast<size_t>(taps));
    for (int64_t ky = 0; ky < c.kh; ++ky) {
        for (int64_t kx = 0; kx < c.kw; ++kx) off[static_cast<size_t>(ky * c.kw + kx)] = ky * wp + kx;
    }
    std::vector<double> acc(static_cast<size_t>(span));
    std::vector<double> wv(static_cast<size_t>(taps));
    for (int64_t oc = 0; oc < c.cout; ++oc) {
        std::fill(acc.begin(), acc.end(), bias != nullptr ? static_cast<double>(bias[oc]) : 0.0);
        for (int64_t ic = 0; ic < c.cin; ++ic) {
            for (int64_t k = 0; k < taps; ++k) wv[static_cast<size_t>(k)] = w[(oc * c.cin + ic) * taps + k];
            accumulate_taps(acc.data(), xp.data() + ic * plane, wv.data(), off.data(), taps, span);
        }
        float* op = out + oc * c.ho * c.wo;
        for (int64_t oy = 0; oy < c.ho; ++oy) {
            for (int64_t ox = 0; ox < c.wo; ++ox) op[oy * c.wo + ox] = static_cast<float>(acc[static_cast<size_t>(oy * wp + ox)]);
        }
    }
}

// Output gradient laid out with the padded row width (zeros in the
// discarded columns) so both backward passes run over contiguous spans.
std::vector<float> widen_grad(const ConvGeom& c, const float* g) {
    const int64_t wp = c.wp();
    std::vector<float> out(static_cast<size_t>(c.cout * c.ho * wp), 0.0F);
    for (int64_t oc = 0; oc < c.cout; ++oc) {
        for (int64_t oy = 0; oy < c.ho; ++oy) std::copy_n(g + (oc * c.ho + oy) * c.wo, c.wo, out.data() + (oc * c.ho + oy) * wp);
    }
    return out;
}

void conv_backward_input(const ConvGeom& c, const std::vector<float>& gw, const float* w, float* dx) {
    // Transposed convolution: gather form over a padded output gradient.
    const int64_t wp = c.wp();
    const int64_t pad_y = c.kh - 1;
    const int64_t pad_x = c.kw - 1;
    const int64_t gwp = wp + 2 * pad_x;
    const int64_t ghp = c.ho + 2 * pad_y;
    std::vector<float> gpad(static_cast<size_t>(c.cout * ghp * gwp), 0.0F);
    for (int64_t oc = 0; oc < c.cout; ++oc) {
        for (int64_t oy = 0; oy < c.ho; ++oy) {
            std::copy_n(gw.data() + (oc * c.ho + oy) * wp, c.wo, gpad.data() + (oc * ghp + oy + pad_y) * gwp + pad_x);
        }
    }
    const int64_t taps = c.kh * c.kw;
    std::vector<int64_t> off(static_cast<size_t>(taps));
    for (int64_t ky = 0; ky < c.kh; ++ky) {
        for (int64_t kx = 0; kx < c.kw; ++kx) off[static_cast<size_t>(ky * c.kw + kx)] = ky * gwp + kx;
    }
    // Padded-input coordinates (py, px) map to gpad rows starting at py.
    const int64_t span = (c.hp() - 1) * gwp + wp;
    std::vector<double> acc(static_cast<size_t>(span));
    std::vector<double> wv(static_cast<size_t>(taps));
    for (int64_t ic = 0; ic < c.cin; ++ic) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int64_t oc = 0; oc < c.cout; ++oc) {
            // Flipped kernel.
            for (int64_t k = 0; k < taps; ++k) wv[static_cast<size_t>(k)] = w[(oc * c.cin + ic) * taps + (taps - 1 - k)];
            accumulate_taps(acc.data(), gpad.data() + oc * ghp * gwp, wv.data(), off.data(), taps, span);
        }
        float* dp = dx + ic * c.h * c.w;
        for (int64_t y = 0; y < c.h; ++y) {
            for (int64_t xx = 0; xx < c.w; ++xx) {
                dp[y * c.w + xx] += static_cast<float>(acc[static_cast<size_t>((y + c.pad) * gwp + xx + c.pad)]);
            }
        }
    }
}

void conv_backward_weight(const ConvGeom& c, const std::vector<float>& gw, const float* x, float* dw) {
    const auto xp = pad_planes(c, x);
    const int64_t wp = c.wp();
    const int64_t plane = c.hp() * wp;
    const int64_t span = (c.ho - 1) * wp + c.wo;
    for (int64_t oc = 0; oc < c.cout; ++oc) {
        const float* gp = gw.data() + oc * c.ho * wp;
        for (int64_t ic = 0; ic < c.cin; ++ic) {
            for (int64_t ky = 0; ky < c.kh; ++ky) {
                for (int64_t kx = 0; kx < c.kw; ++kx) {
                    const float* src = xp.data() + ic * plane + ky * wp + kx;
                    dw[((oc * c.cin + ic) * c.kh + ky) * c.kw + kx] += static_cast<float>(dot(gp, src, span));
                }
            }
        }
    }
}

}  // namespace

Graph::Graph(GraphMode mode) : mode_(mode) {}

const Graph::Node& Graph::node(Var v) const {
    if (v.id < 0 || static_cast<size_t>(v.id) >= nodes_.size()) {
        throw TapeCorrupt("variable " + std::to_string(v.id) + " does not belong to this graph");
    }
    return nodes_[static_cast<size_t>(v.id)];
}

const Tensor& Graph::value(Var v) const { return node(v).val(); }

Var Graph::constant(Tensor value) {
    value.check_finite("input");
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Graph::constant_ref(const Tensor& value) {
    value.check_finite("input");
    Node n;
    n.ref = &value;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Graph::parameter(const std::string& name, const Tensor& value, bool requires_grad) {
    value.check_finite("parameter " + name);
    Node n;
    n.ref = &value;
    n.param_name = name;
    n.bound_shape = value.shape();
    n.is_param = true;
    n.requires_grad = requires_grad && mode_ == GraphMode::record;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

void Graph::save(int32_t id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.is_param || n.saved) return;
    n.saved = true;
    ledger_.live_elements += n.val().numel();
    ledger_.peak_elements = std::max(ledger_.peak_elements, ledger_.live_elements);
}

Var Graph::emit(const char* op, std::vector<int32_t> inputs, Tensor out, std::vector<int32_t> saves,
                BackwardRule rule) {
    out.check_finite(op);

    std::set<int32_t> distinct;
    int64_t working = out.numel();
    bool needs_grad = false;
    for (int32_t id : inputs) {
        const Node& in = nodes_[static_cast<size_t>(id)];
        needs_grad = needs_grad || in.requires_grad;
        if (!in.is_param && distinct.insert(id).second) working += in.val().numel();
    }
    ledger_.transient_peak_elements = std::max(ledger_.transient_peak_elements, working);

    Node n;
    n.owned = std::move(out);
    n.inputs = std::move(inputs);
    n.op = op;
    const auto id = static_cast<int32_t>(nodes_.size());
    if (mode_ == GraphMode::record) {
        n.requires_grad = needs_grad;
        n.rule = std::move(rule);
        nodes_.push_back(std::move(n));
        tape_.push_back(id);
        for (int32_t s : saves) save(s);
    } else {
        nodes_.push_back(std::move(n));
    }
    return Var{id};
}

std::map<std::string, Tensor> Graph::backward(Var output, const Tensor& output_grad) {
    if (mode_ != GraphMode::record) throw TapeCorrupt("backward on a forward-only pass");
    if (swept_) throw TapeCorrupt("tape already swept");
    const Node& out = node(output);
    if (out.val().numel() != 1) throw TapeCorrupt("backward requires a scalar output, got " + shape_str(out.val().shape()));
    if (output_grad.numel() != 1) throw TapeCorrupt("output gradient must have one element");
    if (!tape_.empty() && output.id > tape_.back()) throw TapeCorrupt("output was not produced by the tape");
    for (const Node& n : nodes_) {
        if (n.is_param && n.val().shape() != n.bound_shape) {
            throw TapeCorrupt("parameter " + n.param_name + " changed shape since it was bound");
        }
    }
    swept_ = true;

    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has(nodes_.size(), false);
    auto slot = [&](int32_t id) -> Tensor* {
        const auto i = static_cast<size_t>(id);
        if (!nodes_[i].requires_grad) return nullptr;
        if (!has[i]) {
            grads[i] = Tensor(nodes_[i].val().shape(), 0.0F);
            has[i] = true;
        }
        return &grads[i];
    };

    if (Tensor* g = slot(output.id)) {
        for (int64_t k = 0; k < g->numel(); ++k) (*g)[k] = output_grad[k];
    }
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        const auto i = static_cast<size_t>(*it);
        if (static_cast<int32_t>(i) > output.id || !has[i] || !nodes_[i].requires_grad) continue;
        GradSlots slots;
        slots.reserve(nodes_[i].inputs.size());
        for (int32_t in : nodes_[i].inputs) slots.push_back(slot(in));
        nodes_[i].rule(grads[i], slots);
        grads[i] = Tensor();
    }

    std::map<std::string, Tensor> result;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (!n.is_param || !n.requires_grad) continue;
        Tensor g = has[i] ? std::move(grads[i]) : Tensor(n.val().shape(), 0.0F);
        g.check_finite("backward of " + n.param_name);
        auto [pos, inserted] = result.try_emplace(n.param_name, std::move(g));
        if (!inserted) {
            if (g.shape() != pos->second.shape()) throw TapeCorrupt("parameter " + n.param_name + " bound with two shapes");
            for (int64_t k = 0; k < g.numel(); ++k) pos->second[k] += g[k];
        }
    }
    ledger_.live_elements = 0;
    return result;
}

Var Graph::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(0),
            "matmul shapes " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out(Shape{m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += static_cast<double>(A[i * k + p]) * B[p * n + j];
            out[i * n + j] = static_cast<float>(s);
        }
    }
    return emit("matmul", {a.id, b.id}, std::move(out), {a.id, b.id},
                [this, a, b, m, k, n](const Tensor& g, const GradSlots& d) {
                    const Tensor& A = value(a);
                    const Tensor& B = value(b);
                    if (d[0] != nullptr) {
                        for (int64_t i = 0; i < m; ++i) {
                            for (int64_t p = 0; p < k; ++p) {
                                double s = 0.0;
                                for (int64_t j = 0; j < n; ++j) s += static_cast<double>(g[i * n + j]) * B[p * n + j];
                                (*d[0])[i * k + p] += static_cast<float>(s);
                            }
                        }
                    }
                    if (d[1] != nullptr) {
                        for (int64_t p = 0; p < k; ++p) {
                            for (int64_t j = 0; j < n; ++j) {
                                double s = 0.0;
                                for (int64_t i = 0; i < m; ++i) s += static_cast<double>(A[i * k + p]) * g[i * n + j];
                                (*d[1])[p * n + j] += static_cast<float>(s);
                            }
                        }
                    }
                });
}

Var Graph::conv2d(Var x, Var w, std::optional<Var> bias, int padding) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    require(X.rank() == 3 && W.rank() == 4 && W.dim(1) == X.dim(0),
            "conv2d shapes " + shape_str(X.shape()) + " * " + shape_str(W.shape()));
    ConvGeom c{X.dim(0), X.dim(1), X.dim(2), W.dim(0), W.dim(2), W.dim(3), 0, 0, padding};
    c.ho = c.h + 2 * padding - c.kh + 1;
    c.wo = c.w + 2 * padding - c.kw + 1;
    require(c.ho > 0 && c.wo > 0 && padding >= 0, "conv2d output would be empty");
    const float* bias_ptr = nullptr;
    std::vector<int32_t> inputs{x.id, w.id};
    if (bias) {
        const Tensor& B = value(*bias);
        require(B.rank() == 1 && B.dim(0) == c.cout, "conv2d bias shape " + shape_str(B.shape()));
        bias_ptr = B.ptr();
        inputs.push_back(bias->id);
    }
    Tensor out(Shape{c.cout, c.ho, c.wo});
    conv_forward(c, X.ptr(), W.ptr(), bias_ptr, out.ptr());
    return emit("conv2d", std::move(inputs), std::move(out), {x.id, w.id},
                [this, x, w, c](const Tensor& g, const GradSlots& d) {
                    const auto gw = widen_grad(c, g.ptr());
                    if (d[0] != nullptr) conv_backward_input(c, gw, value(w).ptr(), d[0]->ptr());
                    if (d[1] != nullptr) conv_backward_weight(c, gw, value(x).ptr(), d[1]->ptr());
                    if (d.size() > 2 && d[2] != nullptr) {
                        for (int64_t oc = 0; oc < c.cout; ++oc) {
                            double s = 0.0;
                            for (int64_t i = 0; i < c.ho * c.wo; ++i) s += g[oc * c.ho * c.wo + i];
                            (*d[2])[oc] += static_cast<float>(s);
                        }
                    }
                });
}

Var Graph::add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.shape() == B.shape(), "add shapes " + shape_str(A.shape()) + " + " + shape_str(B.shape()));
    Tensor out(A.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = A[i] + B[i];
    return emit("add", {a.id, b.id}, std::move(out), {}, [](const Tensor& g, const GradSlots& d) {
        for (Tensor* t : d) {
            if (t == nullptr) continue;
            for (int64_t i = 0; i < g.numel(); ++i) (*t)[i] += g[i];
        }
    });
}

Var Graph::mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.shape() == B.shape(), "mul shapes " + shape_str(A.shape()) + " * " + shape_str(B.shape()));
    Tensor out(A.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = A[i] * B[i];
    return emit("mul", {a.id, b.id}, std::move(out), {a.id, b.id}, [this, a, b](const Tensor& g, const GradSlots& d) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (d[0] != nullptr) (*d[0])[i] += g[i] * B[i];
            if (d[1] != nullptr) (*d[1])[i] += g[i] * A[i];
        }
    });
}

Var Graph::relu(Var x) {
    const Tensor& X = value(x);
    Tensor out(X.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = X[i] > 0.0F ? X[i] : 0.0F;
    return emit("relu", {x.id}, std::move(out), {x.id}, [this, x](const Tensor& g, const GradSlots& d) {
        const Tensor& X = value(x);
        for (int64_t i = 0; i < g.numel(); ++i) {
            if (X[i] > 0.0F) (*d[0])[i] += g[i];
        }
    });
}

Var Graph::silu(Var x) {
    const Tensor& X = value(x);
    Tensor out(X.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = X[i] * sigmoid(X[i]);
    return emit("silu", {x.id}, std::move(out), {x.id}, [this, x](const Tensor& g, const GradSlots& d) {
        const Tensor& X = value(x);
        for (int64_t i = 0; i < g.numel(); ++i) {
            const float s = sigmoid(X[i]);
            (*d[0])[i] += g[i] * s * (1.0F + X[i] * (1.0F - s));
        }
    });
}

Var Graph::mean(Var x) {
    const Tensor& X = value(x);
    double s = 0.0;
    for (float v : X.data()) s += v;
    const int64_t n = X.numel();
    return emit("mean", {x.id}, Tensor::scalar(static_cast<float>(s / static_cast<double>(n))), {},
                [n](const Tensor& g, const GradSlots& d) {
                    const float v = g[0] / static_cast<float>(n);
                    for (int64_t i = 0; i < n; ++i) (*d[0])[i] += v;
                });
}

Var Graph::mse(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    require(A.shape() == B.shape(), "mse shapes " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
    double s = 0.0;
    for (int64_t i = 0; i < A.numel(); ++i) {
        const double diff = static_cast<double>(A[i]) - B[i];
        s += diff * diff;
    }
    const int64_t n = A.numel();
    return emit("mse", {a.id, b.id}, Tensor::scalar(static_cast<float>(s / static_cast<double>(n))), {a.id, b.id},
                [this, a, b, n](const Tensor& g, const GradSlots& d) {
                    const Tensor& A = value(a);
                    const Tensor& B = value(b);
                    const double c = 2.0 * g[0] / static_cast<double>(n);
                    for (int64_t i = 0; i < n; ++i) {
                        const auto v = static_cast<float>(c * (static_cast<double>(A[i]) - B[i]));
                        if (d[0] != nullptr) (*d[0])[i] += v;
                        if (d[1] != nullptr) (*d[1])[i] -= v;
                    }
                });
}

Var Graph::avg_pool2x2(Var x) {
    const Tensor& X = value(x);
    require(X.rank() == 3 && X.dim(1) % 2 == 0 && X.dim(2) % 2 == 0, "avg_pool2x2 needs [C,H,W] with even H,W, got " + shape_str(X.shape()));
    const int64_t ch = X.dim(0), h = X.dim(1), w = X.dim(2), ho = h / 2, wo = w / 2;
    Tensor out(Shape{ch, ho, wo});
    for (int64_t c = 0; c < ch; ++c) {
        for (int64_t y = 0; y < ho; ++y) {
            for (int64_t xx = 0; xx < wo; ++xx) {
                const float* p = X.ptr() + (c * h + 2 * y) * w + 2 * xx;
                const double s = static_cast<double>(p[0]) + p[1] + p[w] + p[w + 1];
                out[(c * ho + y) * wo + xx] = static_cast<float>(0.25 * s);
            }
        }
    }
    return emit("avg_pool2x2", {x.id}, std::move(out), {}, [ch, h, w, ho, wo](const Tensor& g, const GradSlots& d) {
        for (int64_t c = 0; c < ch; ++c) {
            for (int64_t y = 0; y < ho; ++y) {
                for (int64_t xx = 0; xx < wo; ++xx) {
                    const float v = 0.25F * g[(c * ho + y) * wo + xx];
                    float* p = d[0]->ptr() + (c * h + 2 * y) * w + 2 * xx;
                    p[0] += v;
                    p[1] += v;
                    p[w] += v;
                    p[w + 1] += v;
                }
            }
        }
    });
}

Var Graph::broadcast(Var x, Shape shape) {
    const Tensor& X = value(x);
    require(X.rank() == shape.size(), "broadcast rank mismatch " + shape_str(X.shape()) + " -> " + shape_str(shape));
    for (size_t d = 0; d < shape.size(); ++d) {
        require(X.dim(d) == shape[d] || X.dim(d) == 1, "cannot broadcast " + shape_str(X.shape()) + " to " + shape_str(shape));
    }
    Tensor out(shape);
    for_each_broadcast(X.shape(), shape, [&](int64_t o, int64_t i) { out[o] = X[i]; });
    Shape in_shape = X.shape();
    return emit("broadcast", {x.id}, std::move(out), {}, [in_shape, shape](const Tensor& g, const GradSlots& d) {
        Tensor& dx = *d[0];
        for_each_broadcast(in_shape, shape, [&](int64_t o, int64_t i) { dx[i] += g[o]; });
    });
}

Var Graph::reshape(Var x, Shape shape) {
    Tensor out = value(x).reshaped(std::move(shape));
    return emit("reshape", {x.id}, std::move(out), {}, [](const Tensor& g, const GradSlots& d) {
        for (int64_t i = 0; i < g.numel(); ++i) (*d[0])[i] += g[i];
    });
}

Var Graph::embedding(Var table, int64_t index) {
    const Tensor& T = value(table);
    require(T.rank() == 2, "embedding table must be [N,D], got " + shape_str(T.shape()));
    if (index < 0 || index >= T.dim(0)) throw std::out_of_range("embedding index " + std::to_string(index) + " out of range");
    const int64_t dim = T.dim(1);
    Tensor out(Shape{dim});
    std::copy_n(T.ptr() + index * dim, dim, out.ptr());
    return emit("embedding", {table.id}, std::move(out), {}, [index, dim](const Tensor& g, const GradSlots& d) {
        for (int64_t j = 0; j < dim; ++j) (*d[0])[index * dim + j] += g[j];
    });
}

Var upsample2x(Graph& g, Var x) {
    const Shape& s = g.shape(x);
    if (s.size() != 3) throw ShapeError("upsample2x needs [C,H,W], got " + shape_str(s));
    const int64_t c = s[0], h = s[1], w = s[2];
    Var r = g.reshape(x, Shape{c, h, 1, w, 1});
    Var b = g.broadcast(r, Shape{c, h, 2, w, 2});
    return g.reshape(b, Shape{c, 2 * h, 2 * w});
}

}  // namespace hybrid
