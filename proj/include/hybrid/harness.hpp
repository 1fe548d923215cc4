// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hybrid/config.hpp"
#include "hybrid/dataset.hpp"
#include "hybrid/memory.hpp"
#include "hybrid/trainer.hpp"

namespace hybrid {

/// `git describe` of the source tree at configure time.
const char* code_version();

DenoiserConfig model_config(const Config& cfg);
DatasetConfig dataset_config(const Config& cfg);
ToyDataset load_dataset(const Config& cfg);

struct PretrainResult {
    ParameterSet params;
    /// Mean loss over each logging window, in order.
    std::vector<double> window_losses;
    double final_loss = 0.0;
    bool reached_target = false;
};

/// Adam on minibatches of prior images with their class conditions.
PretrainResult pretrain(const Denoiser& model, const ToyDataset& data, const Config& cfg, uint64_t seed,
                        std::ostream* log = nullptr);

/// Base weights frozen, adapters attached and the subject token seeded from
/// its prior class.
ParameterSet personalization_params(const Denoiser& model, const ParameterSet& base, const ToyDataset& data,
                                    uint64_t seed);

TrainConfig train_config(const Config& cfg, uint64_t seed);
EvalSpec eval_spec(const Config& cfg, const ToyDataset& data);

/// Widths listed in mem.channels, each described at the configured rank.
std::vector<ArchSpec> benchmark_archs(const Config& cfg);

/// Peak predicted total over the branches a run can take.
int64_t predicted_run_peak_elements(const ArchSpec& arch, const TrainConfig& tc, int64_t resolution);

struct AblationCell {
    std::string name;
    TrainConfig train;
};

struct AblationRow {
    std::string cell;
    uint64_t seed = 0;
    TrainConfig train;
    EvalMetrics metrics;
    int64_t bp_steps = 0;
    int64_t zo_steps = 0;
    int64_t aborted = 0;
    int64_t run_peak_elements = 0;
    int64_t predicted_peak_elements = 0;
    bool failed = false;
};

/// Cells of a named preset for one seed: observation1, observation2, main or grid.
std::vector<AblationCell> ablation_cells(const std::string& preset, const Config& cfg, uint64_t seed);

class Experiment {
public:
    Experiment(const Config& cfg, const ParameterSet& base);

    const Denoiser& model() const { return model_; }
    const ToyDataset& data() const { return data_; }
    const EvalSpec& spec() const { return spec_; }

    TrainResult run(const TrainConfig& tc, bool evaluate_during = false) const;
    AblationRow run_cell(const AblationCell& cell) const;
    EvalMetrics evaluate(const ParameterSet& params) const;

private:
    Config cfg_;
    Denoiser model_;
    ToyDataset data_;
    ParameterSet base_;
    EvalSpec spec_;
    ArchSpec arch_;
};

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

/// Rows of t with the TAP column and one DTAP column per probed step.
void write_scheduler_probe(std::ostream& os, const SelectorConfig& base, const std::vector<int64_t>& i_values,
                           int t_stride);

}  // namespace hybrid
