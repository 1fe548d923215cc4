// SPDX-License-Identifier: Apache-2.0
#include "hybrid/memory.hpp"

#include <algorithm>
#include <cstdio>

#include "hybrid/diffusion.hpp"

namespace hybrid {

ArchSpec describe(const std::string& name, const Denoiser& model, const ParameterSet& params) {
    const int64_t ch = model.config().channels;
    const bool lora = params.contains(Denoiser::block_name(0, "proj.lora_a"));
    const int64_t rank = lora ? model.config().lora_rank : 0;
    ArchSpec a;
    a.name = name;
    a.layers.push_back({"cond_embedding", ch, ch, 0, 0, 0});
    a.layers.push_back({"input_conv", 1, ch, 3, 0, 0});
    a.layers.push_back({"position_conv", 2, ch, 3, 0, 0});
    const int last = model.num_blocks() - 1;
    a.layers.push_back({"res_block", ch, ch, 3, model.block_level(0), rank});
    a.layers.push_back({"downsample", ch, ch, 2, 0, 0});
    a.layers.push_back({"res_block", ch, ch, 3, model.block_level(1), rank});
    a.layers.push_back({"downsample", ch, ch, 2, 1, 0});
    for (int b = 2; b < last; ++b) a.layers.push_back({"res_block", ch, ch, 3, model.block_level(b), rank});
    a.layers.push_back({"upsample_skip", ch, ch, 2, 1, 0});
    a.layers.push_back({"res_block", ch, ch, 3, model.block_level(last), rank});
    a.layers.push_back({"upsample_skip", ch, ch, 2, 0, 0});
    a.layers.push_back({"output_conv", ch, 1, 3, 0, 0});
    a.layers.push_back({"mse_loss", 1, 1, 0, 0, 0});
    a.parameter_elements = params.numel();
    a.trainable_elements = params.trainable_numel();
    return a;
}

namespace {

struct LayerCost {
    int64_t stored = 0;
    int64_t working = 0;
};

// Mirrors the primitive-level accounting of Graph: stored values are the
// non-parameter operands a primitive keeps for its backward rule (counted
// once per tensor), working sets are distinct non-parameter inputs plus the
// output of a single primitive.
LayerCost layer_cost(const LayerDesc& l, int64_t height, int64_t width) {
    auto pixels = [&](int level) { return (height >> level) * (width >> level); };
    const int64_t p = pixels(l.level);
    const int64_t cin = l.in_channels;
    const int64_t cout = l.out_channels;
    if (l.kind == "cond_embedding") {
        // add(time, class) -> silu (keeps its input) -> reshape (kept by the matmuls).
        return {2 * cout, 3 * cout};
    }
    if (l.kind == "input_conv") {
        // The noisy image is kept by the convolution.
        return {cin * p, cin * p + cout * p};
    }
    if (l.kind == "position_conv") {
        // The coordinate planes are kept by the convolution; the merge with
        // the image features is a three-operand add.
        return {cin * p, std::max(cin * p + cout * p, 3 * cout * p)};
    }
    if (l.kind == "res_block") {
        // conv3x3 keeps the biased input, silu its input, conv1x1 its input,
        // and the adapter up-projection its rank-r input. The widest step is
        // a three-operand add (bias, adapter merge, residual) at C x P, or
        // the adapter up-projection when r exceeds 2C.
        const int64_t stored = (3 * cout + l.rank) * p;
        const int64_t working = std::max({3 * cout * p, cout + cout * p, cout * p + l.rank * p});
        return {stored, working};
    }
    if (l.kind == "downsample") {
        return {0, cin * p + cin * pixels(l.level + 1)};
    }
    if (l.kind == "upsample_skip") {
        // Coarse level l + 1 to level l: reshape, broadcast, reshape, add skip.
        const int64_t coarse = cin * pixels(l.level + 1);
        const int64_t fine = cin * p;
        return {0, std::max({2 * coarse, coarse + fine, 2 * fine, 3 * fine})};
    }
    if (l.kind == "output_conv") {
        return {cin * p, cin * p + cout * p};
    }
    if (l.kind == "mse_loss") {
        // Prediction and noise target are both kept.
        return {2 * p, 2 * p + 1};
    }
    throw UnknownLayer(l.kind);
}

}  // namespace

MemoryEstimate predict(const ArchSpec& arch, int64_t height, int64_t width, MemBranch branch) {
    if (height < 1 || width < 1) throw std::invalid_argument("resolution must be at least 1x1");
    MemoryEstimate m;
    for (const auto& l : arch.layers) {
        const LayerCost c = layer_cost(l, height, width);
        m.activation_elements += c.stored;
        m.transient_elements = std::max(m.transient_elements, c.working);
    }
    if (branch == MemBranch::zo) {
        m.activation_elements = 0;
        m.parameter_buffers = arch.parameter_elements;
    } else {
        m.parameter_buffers = arch.parameter_elements + arch.trainable_elements;
    }
    m.total_elements = m.parameter_buffers + m.activation_elements + m.transient_elements;
    m.total_bytes = 4 * m.total_elements;
    return m;
}

int64_t measured_total_elements(const ActivationLedger& ledger, int64_t parameter_elements, int64_t trainable_elements,
                                MemBranch branch) {
    if (branch == MemBranch::zo) return parameter_elements + ledger.transient_peak_elements;
    return parameter_elements + trainable_elements + ledger.peak_elements + ledger.transient_peak_elements;
}

std::vector<MemReportRow> report(const std::vector<ArchSpec>& archs, const std::vector<double>& ratios,
                                 int64_t full_resolution) {
    std::vector<MemReportRow> rows;
    for (const auto& a : archs) {
        const int64_t zo = predict(a, full_resolution, full_resolution, MemBranch::zo).total_bytes;
        for (double r : ratios) {
            const int64_t low = resized_extent(full_resolution, r);
            MemReportRow row;
            row.arch = a.name;
            row.ratio = r;
            row.bp_bytes = predict(a, low, low, MemBranch::bp).total_bytes;
            if (r == 1.0) {
                row.method = "BP-high";
                row.zo_bytes = 0;
                row.peak_bytes = row.bp_bytes;
            } else {
                row.method = "Ours";
                row.zo_bytes = zo;
                row.peak_bytes = std::max(row.bp_bytes, row.zo_bytes);
            }
            rows.push_back(row);
        }
    }
    return rows;
}

void write_report_csv(std::ostream& os, const std::vector<MemReportRow>& rows) {
    os << "arch,method,ratio,bp_bytes,zo_bytes,peak_bytes,bp_mib,zo_mib,peak_mib\n";
    char buf[64];
    auto mib = [&](int64_t bytes) {
        std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(bytes) / (1024.0 * 1024.0));
        return std::string(buf);
    };
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.3f", r.ratio);
        os << r.arch << ',' << r.method << ',' << buf << ',' << r.bp_bytes << ',' << r.zo_bytes << ',' << r.peak_bytes
           << ',' << mib(r.bp_bytes) << ',' << mib(r.zo_bytes) << ',' << mib(r.peak_bytes) << '\n';
    }
}

}  // namespace hybrid
