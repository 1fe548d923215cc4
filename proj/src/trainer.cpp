// SPDX-License-Identifier: Apache-2.0
#include "hybrid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "hybrid/diffusion.hpp"
#include "hybrid/memory.hpp"

namespace hybrid {

TrainStreams::TrainStreams(uint64_t master)
    : data(RandomStream(master).fork("data")),
      timestep(RandomStream(master).fork("timestep")),
      selection(RandomStream(master).fork("selection")),
      noise(RandomStream(master).fork("noise")),
      perturbation(RandomStream(master).fork("perturbation")) {}

TrainResult train(const Denoiser& model, const TrainConfig& cfg, ParameterSet params, const std::vector<Tensor>& images,
                  int condition, const EvalFn& eval) {
    if (images.empty()) throw std::invalid_argument("no personalization images");
    if (cfg.i_max < 1) throw std::invalid_argument("i_max must be positive");
    cfg.selector.validate();
    cfg.bp.validate();
    cfg.zo.validate();
    const int t_hi = cfg.t_hi < 0 ? model.config().t_max : cfg.t_hi;
    if (cfg.t_lo < 0 || cfg.t_lo >= t_hi || t_hi > model.config().t_max) throw std::invalid_argument("bad timestep range");

    TrainStreams streams(cfg.seed);
    TrainResult result;
    const int64_t param_elems = params.numel();
    const int64_t trainable_elems = params.trainable_numel();

    for (int64_t i = 1; i <= cfg.i_max; ++i) {
        const auto start = std::chrono::steady_clock::now();
        TrainRecord rec;
        rec.step = i;
        // Every stream advances identically on every step, whichever branch runs.
        rec.data_index = streams.data.uniform_int(0, static_cast<int64_t>(images.size()));
        rec.t = static_cast<int>(streams.timestep.uniform_int(cfg.t_lo, t_hi));
        rec.noise_seed = streams.noise.next_u64();
        RandomStream step_perturb(streams.perturbation.next_u64());
        rec.perturbation_seed = step_perturb.seed();

        const bool warmup = i <= cfg.warmup_bp_steps;
        rec.p_zo = warmup ? 0.0 : zo_probability(static_cast<double>(i), rec.t, cfg.selector);
        rec.branch = warmup ? Branch::bp_low : select_branch(i, rec.t, cfg.selector, streams.selection);

        const Tensor& x = images[static_cast<size_t>(rec.data_index)];
        try {
            if (rec.branch == Branch::bp_low) {
                const BpStepResult r = bp_step(model, params, x, condition, rec.t, cfg.bp, rec.noise_seed);
                rec.loss = r.loss;
                rec.bp_peak_elements = measured_total_elements(r.ledger, param_elems, trainable_elems, MemBranch::bp);
                ++result.bp_steps;
            } else {
                const Tensor eps = seeded_normal(x.shape(), rec.noise_seed);
                int64_t transient = 0;
                const LossFn loss_fn = [&](const ParameterSet& p) {
                    ActivationLedger ledger;
                    const double v = model.loss_value(p, x, condition, rec.t, eps, &ledger);
                    transient = std::max(transient, ledger.transient_peak_elements);
                    return v;
                };
                const ZoStepResult r = accumulate_step(params, loss_fn, cfg.zo, step_perturb);
                rec.loss = r.loss;
                ActivationLedger probe;
                probe.transient_peak_elements = transient;
                rec.zo_peak_elements = measured_total_elements(probe, param_elems, trainable_elems, MemBranch::zo);
                ++result.zo_steps;
            }
        } catch (const NonFiniteValue&) {
            rec.aborted = true;
            rec.loss = std::numeric_limits<double>::quiet_NaN();
            rec.bp_peak_elements = 0;
            rec.zo_peak_elements = 0;
            ++result.aborted;
        }
        result.run_peak_elements = std::max({result.run_peak_elements, rec.bp_peak_elements, rec.zo_peak_elements});
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.records.push_back(rec);

        if (eval && cfg.eval_every > 0 && i % cfg.eval_every == 0 && i != cfg.i_max) {
            result.evals.push_back({i, eval(params)});
        }
    }
    if (eval) result.evals.push_back({cfg.i_max, eval(params)});
    result.failed = static_cast<double>(result.aborted) > cfg.max_abort_fraction * static_cast<double>(cfg.i_max);
    result.params = std::move(params);
    return result;
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("mse of differently shaped tensors");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.numel());
}

double correlation(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("correlation of differently sized tensors");
    const auto n = static_cast<double>(a.numel());
    double ma = 0.0, mb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 1e-12 || sbb <= 1e-12) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

Tensor low_frequency(const Tensor& image) {
    const int64_t h = image.dim(image.rank() - 2);
    const int64_t w = image.dim(image.rank() - 1);
    return resample_area(image, std::max<int64_t>(1, h / 4), std::max<int64_t>(1, w / 4));
}

double structure_score(const std::vector<Tensor>& samples, const std::vector<Tensor>& templates) {
    if (samples.empty() || templates.empty()) return 0.0;
    std::vector<Tensor> low_t;
    low_t.reserve(templates.size());
    for (const auto& t : templates) low_t.push_back(low_frequency(t));
    double total = 0.0;
    for (const auto& s : samples) {
        const Tensor ls = low_frequency(s);
        double best = -1.0;
        for (const auto& lt : low_t) best = std::max(best, correlation(ls, lt));
        total += best;
    }
    return total / static_cast<double>(samples.size());
}

double subject_fidelity(const std::vector<Tensor>& samples, const std::vector<Tensor>& templates) {
    if (samples.empty() || templates.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : samples) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : templates) best = std::min(best, mean_squared_error(s, t));
        total += best;
    }
    return -total / static_cast<double>(samples.size());
}

uint64_t eval_sample_seed(const EvalSpec& spec, int c, int k) {
    return hash_combine(hash_combine(spec.seed, static_cast<uint64_t>(c)), static_cast<uint64_t>(k));
}

void prepare_reference(const Denoiser& model, const ParameterSet& pretrained, EvalSpec& spec) {
    spec.reference_prior_samples.clear();
    for (int c = 0; c < static_cast<int>(spec.prior_templates.size()); ++c) {
        std::vector<Tensor> s;
        for (int k = 0; k < spec.prior_samples; ++k) {
            s.push_back(model.sample(pretrained, c, spec.sampler_steps, eval_sample_seed(spec, c, k)));
        }
        spec.reference_prior_samples.push_back(std::move(s));
    }
}

EvalMetrics evaluate(const Denoiser& model, const ParameterSet& params, const EvalSpec& spec) {
    EvalMetrics m;
    try {
        const int subject = model.subject_token();
        std::vector<Tensor> samples;
        for (int k = 0; k < spec.samples; ++k) {
            samples.push_back(model.sample(params, subject, spec.sampler_steps, eval_sample_seed(spec, subject, k)));
        }
        m.subject_fidelity = subject_fidelity(samples, spec.subject_templates);
        m.structure_score = structure_score(samples, spec.subject_templates);

        double drift = 0.0;
        int64_t count = 0;
        for (size_t c = 0; c < spec.reference_prior_samples.size(); ++c) {
            for (size_t k = 0; k < spec.reference_prior_samples[c].size(); ++k) {
                const Tensor s = model.sample(params, static_cast<int>(c), spec.sampler_steps,
                                              eval_sample_seed(spec, static_cast<int>(c), static_cast<int>(k)));
                drift += mean_squared_error(s, spec.reference_prior_samples[c][k]);
                ++count;
            }
        }
        m.prior_drift = count > 0 ? drift / static_cast<double>(count) : 0.0;
    } catch (const NonFiniteValue&) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        m = EvalMetrics{nan, nan, nan, true};
    }
    return m;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

const char* const kRecordsCsvHeader =
    "step,t,branch,p_zo,loss,bp_peak_elements,zo_peak_elements,status,data_index,noise_seed,perturbation_seed";

void write_records_csv(std::ostream& os, const std::vector<TrainRecord>& records) {
    os << kRecordsCsvHeader << '\n';
    for (const auto& r : records) {
        os << r.step << ',' << r.t << ',' << to_string(r.branch) << ',' << format_double(r.p_zo) << ','
           << format_double(r.loss) << ',' << r.bp_peak_elements << ',' << r.zo_peak_elements << ','
           << (r.aborted ? "aborted" : "ok") << ',' << r.data_index << ',' << r.noise_seed << ',' << r.perturbation_seed
           << '\n';
    }
}

void write_timing_csv(std::ostream& os, const std::vector<TrainRecord>& records) {
    os << "step,wall_ms\n";
    for (const auto& r : records) os << r.step << ',' << format_double(r.wall_ms) << '\n';
}

void write_evals_csv(std::ostream& os, const std::vector<EvalPoint>& evals) {
    os << "step,subject_fidelity,structure_score,prior_drift\n";
    for (const auto& e : evals) {
        os << e.step << ',' << format_double(e.metrics.subject_fidelity) << ','
           << format_double(e.metrics.structure_score) << ',' << format_double(e.metrics.prior_drift) << '\n';
    }
}

}  // namespace hybrid
