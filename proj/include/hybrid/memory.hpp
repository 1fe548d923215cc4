// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hybrid/denoiser.hpp"

namespace hybrid {

class UnknownLayer : public std::invalid_argument {
public:
    explicit UnknownLayer(const std::string& kind) : std::invalid_argument("unknown layer kind '" + kind + "'") {}
};

/// One stage of the denoiser as seen by the memory model. `level` is the
/// number of 2x poolings applied to the input resolution; `rank` is the
/// adapter rank of a residual block (0 when absent).
struct LayerDesc {
    std::string kind;
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int kernel = 0;
    int level = 0;
    int64_t rank = 0;
};

struct ArchSpec {
    std::string name;
    std::vector<LayerDesc> layers;
    int64_t parameter_elements = 0;
    int64_t trainable_elements = 0;
};

/// Layer list and parameter census of a denoiser with the given trainable set.
ArchSpec describe(const std::string& name, const Denoiser& model, const ParameterSet& params);

enum class MemBranch { bp, zo };

struct MemoryEstimate {
    /// Values stored for the backward pass (0 for ZO).
    int64_t activation_elements = 0;
    /// Largest single-primitive working set.
    int64_t transient_elements = 0;
    /// Model weights plus one gradient buffer per trainable tensor (BP only).
    int64_t parameter_buffers = 0;
    int64_t total_elements = 0;
    int64_t total_bytes = 0;
};

/// Closed-form per-step memory at an input of height x width.
MemoryEstimate predict(const ArchSpec& arch, int64_t height, int64_t width, MemBranch branch);

/// Total step memory from a measured ledger, using the same accounting.
int64_t measured_total_elements(const ActivationLedger& ledger, int64_t parameter_elements, int64_t trainable_elements,
                                MemBranch branch);

struct MemReportRow {
    std::string arch;
    std::string method;
    double ratio = 1.0;
    int64_t bp_bytes = 0;
    int64_t zo_bytes = 0;
    int64_t peak_bytes = 0;
};

/// Rows "BP-high" (r = 1, BP only) and "Ours (r)" for each ratio < 1 with
/// BP at the reduced resolution, ZO at full resolution and peak = max.
std::vector<MemReportRow> report(const std::vector<ArchSpec>& archs, const std::vector<double>& ratios,
                                 int64_t full_resolution = Denoiser::kFullResolution);
void write_report_csv(std::ostream& os, const std::vector<MemReportRow>& rows);

}  // namespace hybrid
