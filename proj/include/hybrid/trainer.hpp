// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "hybrid/bp_optimizer.hpp"
#include "hybrid/denoiser.hpp"
#include "hybrid/scheduler.hpp"
#include "hybrid/zo_optimizer.hpp"

namespace hybrid {

struct TrainConfig {
    int64_t i_max = 1000;
    SelectorConfig selector;
    BpConfig bp;
    ZoConfig zo;
    uint64_t seed = 0;
    /// Intermediate evaluation cadence in steps; 0 evaluates only at the end.
    int64_t eval_every = 0;
    /// Timesteps are drawn uniformly from [t_lo, t_hi); t_hi < 0 means t_max.
    int t_lo = 0;
    int t_hi = -1;
    /// Steps 1..warmup_bp_steps are forced onto the BP-low branch.
    int64_t warmup_bp_steps = 0;
    double max_abort_fraction = 0.01;
};

/// Independent per-purpose streams derived from one master seed.
struct TrainStreams {
    RandomStream data;
    RandomStream timestep;
    RandomStream selection;
    RandomStream noise;
    RandomStream perturbation;

    explicit TrainStreams(uint64_t master);
};

struct TrainRecord {
    int64_t step = 0;
    int t = 0;
    Branch branch = Branch::bp_low;
    double p_zo = 0.0;
    double loss = 0.0;
    int64_t bp_peak_elements = 0;
    int64_t zo_peak_elements = 0;
    double wall_ms = 0.0;
    bool aborted = false;
    int64_t data_index = 0;
    uint64_t noise_seed = 0;
    uint64_t perturbation_seed = 0;
};

struct EvalMetrics {
    double subject_fidelity = 0.0;
    double structure_score = 0.0;
    double prior_drift = 0.0;
    /// A sampler produced a non-finite value; the three scores are NaN.
    bool diverged = false;
};

/// What evaluation compares against. Reference prior samples come from the
/// pretrained model with the same sampler seeds; see prepare_reference().
struct EvalSpec {
    std::vector<Tensor> subject_templates;
    std::vector<std::vector<Tensor>> prior_templates;
    std::vector<std::vector<Tensor>> reference_prior_samples;
    int samples = 8;
    int prior_samples = 2;
    int sampler_steps = 50;
    uint64_t seed = 1234;
};

struct EvalPoint {
    int64_t step = 0;
    EvalMetrics metrics;
};

struct TrainResult {
    ParameterSet params;
    std::vector<TrainRecord> records;
    std::vector<EvalPoint> evals;
    int64_t zo_steps = 0;
    int64_t bp_steps = 0;
    int64_t aborted = 0;
    /// max over steps of the per-step memory of whichever branch ran.
    int64_t run_peak_elements = 0;
    bool failed = false;
};

using EvalFn = std::function<EvalMetrics(const ParameterSet&)>;

/// Personalization loop: per step sample an image and a timestep, choose
/// the branch, and run either bp_step on the downsampled image or
/// accumulate_step on the full-resolution image.
TrainResult train(const Denoiser& model, const TrainConfig& cfg, ParameterSet params, const std::vector<Tensor>& images,
                  int condition, const EvalFn& eval = {});

/// Pearson correlation; 0 when either side is constant.
double correlation(const Tensor& a, const Tensor& b);
double mean_squared_error(const Tensor& a, const Tensor& b);
/// 4x area downsampling used by the structure score.
Tensor low_frequency(const Tensor& image);

/// Mean over `samples` of the best structure correlation against `templates`.
double structure_score(const std::vector<Tensor>& samples, const std::vector<Tensor>& templates);
/// Negative mean over samples of the nearest-template MSE.
double subject_fidelity(const std::vector<Tensor>& samples, const std::vector<Tensor>& templates);

/// Fills spec.reference_prior_samples from the pretrained parameters.
void prepare_reference(const Denoiser& model, const ParameterSet& pretrained, EvalSpec& spec);
EvalMetrics evaluate(const Denoiser& model, const ParameterSet& params, const EvalSpec& spec);
/// Sampler seed of sample k for condition c; shared by evaluate() and prepare_reference().
uint64_t eval_sample_seed(const EvalSpec& spec, int c, int k);

/// Metrics CSV, one record per row; wall time is excluded so identical runs
/// produce identical bytes.
void write_records_csv(std::ostream& os, const std::vector<TrainRecord>& records);
void write_timing_csv(std::ostream& os, const std::vector<TrainRecord>& records);
void write_evals_csv(std::ostream& os, const std::vector<EvalPoint>& evals);
extern const char* const kRecordsCsvHeader;

/// Fixed-format number rendering for CSV output.
std::string format_double(double v);

}  // namespace hybrid
