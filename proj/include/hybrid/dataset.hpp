// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hybrid/random.hpp"
#include "hybrid/tensor.hpp"

namespace hybrid {

enum class ShapeKind { ellipse, rectangle, triangle, cross };

struct ShapePose {
    double cx = 16.0;
    double cy = 16.0;
    double scale = 9.0;
    double angle = 0.0;
    /// Foreground level; the background is -1.
    double fill = 1.0;
    /// Stripe texture amplitude across the shape, 0 for a flat fill.
    double stripes = 0.0;
    double stripe_period = 4.0;
};

/// Renders one antialiased shape into a [1,size,size] image in [-1, 1].
Tensor render_shape(ShapeKind kind, const ShapePose& pose, int64_t size = 32);

struct DatasetConfig {
    int num_classes = 4;
    int64_t prior_per_class = 64;
    int subject_renders = 4;
    int templates_per_class = 16;
    int subject_class = 2;
    int64_t size = 32;
};

/// Procedural prior classes plus one textured subject instance.
/// Fully determined by (kGeneratorVersion, seed).
struct ToyDataset {
    static constexpr int kGeneratorVersion = 1;

    DatasetConfig config;
    uint64_t seed = 0;
    std::vector<Tensor> prior_images;
    std::vector<int> prior_labels;
    std::vector<std::vector<Tensor>> prior_templates;
    std::vector<Tensor> subject_images;
    std::vector<Tensor> subject_templates;

    static ToyDataset generate(const DatasetConfig& cfg, uint64_t seed);
};

ShapeKind shape_kind_for_class(int c);
std::string to_string(ShapeKind kind);

/// Writes all images as a single PGM contact sheet per split for inspection.
void write_pgm(const std::string& path, const std::vector<Tensor>& images, int64_t columns = 16);

}  // namespace hybrid
