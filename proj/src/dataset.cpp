// SPDX-License-Identifier: Apache-2.0
#include "hybrid/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace hybrid {

namespace {

constexpr int kSuper = 4;

// Shape-local coordinates scaled so the shape spans roughly [-1, 1].
bool inside(ShapeKind kind, double u, double v) {
    switch (kind) {
        case ShapeKind::ellipse:
            return (u * u) / 1.0 + (v * v) / 0.45 <= 1.0;
        case ShapeKind::rectangle:
            return std::abs(u) <= 0.95 && std::abs(v) <= 0.6;
        case ShapeKind::triangle: {
            // Apex up, base at v = 0.7.
            if (v > 0.7 || v < -0.9) return false;
            const double half = (v + 0.9) / 1.6;
            return std::abs(u) <= half;
        }
        case ShapeKind::cross:
            return (std::abs(u) <= 0.95 && std::abs(v) <= 0.35) || (std::abs(u) <= 0.35 && std::abs(v) <= 0.95);
    }
    return false;
}

}  // namespace

ShapeKind shape_kind_for_class(int c) {
    static constexpr std::array<ShapeKind, 4> kinds{ShapeKind::ellipse, ShapeKind::rectangle, ShapeKind::triangle,
                                                    ShapeKind::cross};
    return kinds.at(static_cast<size_t>(c) % kinds.size());
}

std::string to_string(ShapeKind kind) {
    switch (kind) {
        case ShapeKind::ellipse: return "ellipse";
        case ShapeKind::rectangle: return "rectangle";
        case ShapeKind::triangle: return "triangle";
        case ShapeKind::cross: return "cross";
    }
    return "unknown";
}

Tensor render_shape(ShapeKind kind, const ShapePose& pose, int64_t size) {
    if (size < 4 || pose.scale <= 0.0) throw std::invalid_argument("bad render size or scale");
    Tensor img(Shape{1, size, size});
    const double c = std::cos(pose.angle);
    const double s = std::sin(pose.angle);
    const double px = std::sin(pose.angle);
    const double py = -std::cos(pose.angle);
    for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
            double acc = 0.0;
            for (int sy = 0; sy < kSuper; ++sy) {
                for (int sx = 0; sx < kSuper; ++sx) {
                    const double fx = static_cast<double>(x) + (sx + 0.5) / kSuper - pose.cx;
                    const double fy = static_cast<double>(y) + (sy + 0.5) / kSuper - pose.cy;
                    const double u = (c * fx + s * fy) / pose.scale;
                    const double v = (-s * fx + c * fy) / pose.scale;
                    if (!inside(kind, u, v)) {
                        acc += -1.0;
                        continue;
                    }
                    double level = pose.fill;
                    if (pose.stripes != 0.0) {
                        const double phase = 2.0 * std::numbers::pi * (px * fx + py * fy) / pose.stripe_period;
                        level -= pose.stripes * (0.5 + 0.5 * std::cos(phase));
                    }
                    acc += level;
                }
            }
            img[static_cast<size_t>(y * size + x)] = static_cast<float>(acc / (kSuper * kSuper));
        }
    }
    return img;
}

namespace {

ShapePose random_pose(RandomStream& rng, double size) {
    ShapePose p;
    const double mid = size / 2.0;
    p.cx = mid + rng.uniform() * 8.0 - 4.0;
    p.cy = mid + rng.uniform() * 8.0 - 4.0;
    p.scale = size * (0.22 + 0.1 * rng.uniform());
    p.angle = (rng.uniform() - 0.5) * std::numbers::pi / 3.0;
    p.fill = 0.5 + 0.5 * rng.uniform();
    return p;
}

ShapePose subject_pose(double size) {
    ShapePose p;
    p.cx = size / 2.0;
    p.cy = size / 2.0 + 1.0;
    p.scale = size * 0.34;
    p.angle = 0.0;
    p.fill = 1.0;
    p.stripes = 1.6;
    p.stripe_period = 5.0;
    return p;
}

}  // namespace

ToyDataset ToyDataset::generate(const DatasetConfig& cfg, uint64_t seed) {
    if (cfg.num_classes < 1 || cfg.prior_per_class < 1 || cfg.subject_renders < 1 || cfg.templates_per_class < 1) {
        throw std::invalid_argument("dataset counts must be positive");
    }
    if (cfg.subject_class < 0 || cfg.subject_class >= cfg.num_classes) {
        throw std::invalid_argument("subject_class out of range");
    }
    ToyDataset ds;
    ds.config = cfg;
    ds.seed = seed;
    RandomStream root = RandomStream(seed).fork("toy-v" + std::to_string(kGeneratorVersion));
    const auto size = static_cast<double>(cfg.size);

    RandomStream prior = root.fork("prior");
    for (int c = 0; c < cfg.num_classes; ++c) {
        for (int64_t k = 0; k < cfg.prior_per_class; ++k) {
            ds.prior_images.push_back(render_shape(shape_kind_for_class(c), random_pose(prior, size), cfg.size));
            ds.prior_labels.push_back(c);
        }
    }
    RandomStream templ = root.fork("templates");
    ds.prior_templates.resize(static_cast<size_t>(cfg.num_classes));
    for (int c = 0; c < cfg.num_classes; ++c) {
        for (int k = 0; k < cfg.templates_per_class; ++k) {
            ds.prior_templates[static_cast<size_t>(c)].push_back(
                render_shape(shape_kind_for_class(c), random_pose(templ, size), cfg.size));
        }
    }

    RandomStream subj = root.fork("subject");
    const ShapeKind kind = shape_kind_for_class(cfg.subject_class);
    const ShapePose base = subject_pose(size);
    ds.subject_templates.push_back(render_shape(kind, base, cfg.size));
    for (int k = 0; k < cfg.subject_renders; ++k) {
        ShapePose p = base;
        p.cx += subj.uniform() * 2.0 - 1.0;
        p.cy += subj.uniform() * 2.0 - 1.0;
        p.angle += (subj.uniform() - 0.5) * 0.1;
        ds.subject_images.push_back(render_shape(kind, p, cfg.size));
        ds.subject_templates.push_back(ds.subject_images.back());
    }
    return ds;
}

void write_pgm(const std::string& path, const std::vector<Tensor>& images, int64_t columns) {
    if (images.empty()) throw std::invalid_argument("no images to write");
    const int64_t h = images.front().dim(1);
    const int64_t w = images.front().dim(2);
    const auto n = static_cast<int64_t>(images.size());
    const int64_t cols = std::min(columns, n);
    const int64_t rows = (n + cols - 1) / cols;
    std::vector<unsigned char> sheet(static_cast<size_t>(rows * h * cols * w), 0);
    for (int64_t k = 0; k < n; ++k) {
        const Tensor& img = images[static_cast<size_t>(k)];
        const int64_t oy = (k / cols) * h;
        const int64_t ox = (k % cols) * w;
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const double v = std::clamp((img[static_cast<size_t>(y * w + x)] + 1.0) * 127.5, 0.0, 255.0);
                sheet[static_cast<size_t>((oy + y) * cols * w + ox + x)] = static_cast<unsigned char>(std::lround(v));
            }
        }
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << "P5\n" << cols * w << ' ' << rows * h << "\n255\n";
    os.write(reinterpret_cast<const char*>(sheet.data()), static_cast<std::streamsize>(sheet.size()));
}

}  // namespace hybrid
