// SPDX-License-Identifier: Apache-2.0
#include "hybrid/harness.hpp"

#include <algorithm>
#include <cmath>

#include "hybrid/bp_optimizer.hpp"
#include "hybrid/diffusion.hpp"

#ifndef HYBRID_VERSION
#define HYBRID_VERSION "unknown"
#endif

namespace hybrid {

const char* code_version() { return HYBRID_VERSION; }

DenoiserConfig model_config(const Config& cfg) {
    DenoiserConfig m;
    m.channels = static_cast<int>(cfg.get_int("model.channels"));
    m.lora_rank = static_cast<int>(cfg.get_int("model.lora_rank"));
    m.time_bins = static_cast<int>(cfg.get_int("model.time_bins"));
    m.t_max = static_cast<int>(cfg.get_int("model.t_max"));
    m.mid_blocks = static_cast<int>(cfg.get_int("model.mid_blocks"));
    m.pixel_coordinates = cfg.get_bool("model.pixel_coordinates");
    return m;
}

DatasetConfig dataset_config(const Config& cfg) {
    DatasetConfig d;
    d.prior_per_class = cfg.get_int("data.prior_per_class");
    d.subject_renders = static_cast<int>(cfg.get_int("data.subject_renders"));
    d.templates_per_class = static_cast<int>(cfg.get_int("data.templates_per_class"));
    d.subject_class = static_cast<int>(cfg.get_int("data.subject_class"));
    return d;
}

ToyDataset load_dataset(const Config& cfg) {
    return ToyDataset::generate(dataset_config(cfg), static_cast<uint64_t>(cfg.get_int("data.seed")));
}

PretrainResult pretrain(const Denoiser& model, const ToyDataset& data, const Config& cfg, uint64_t seed,
                        std::ostream* log) {
    const int64_t steps = cfg.get_int("pretrain.steps");
    const int64_t batch = cfg.get_int("pretrain.batch");
    const double lr = cfg.get_double("pretrain.lr");
    const int64_t log_every = std::max<int64_t>(1, cfg.get_int("pretrain.log_every"));
    if (steps < 1 || batch < 1 || lr <= 0.0) throw ConfigError("pretrain.steps, batch and lr must be positive");
    const double low_fraction = cfg.get_double("pretrain.low_res_fraction");
    const std::vector<double> low_ratios = cfg.get_doubles("pretrain.low_res_ratios");
    if (low_fraction < 0.0 || low_fraction > 1.0) throw ConfigError("pretrain.low_res_fraction must lie in [0, 1]");
    if (low_fraction > 0.0 && low_ratios.empty()) throw ConfigError("pretrain.low_res_ratios is empty");

    PretrainResult out;
    out.params = model.init_params(static_cast<uint64_t>(cfg.get_int("model.init_seed")));
    RandomStream root = RandomStream(seed).fork("pretrain");
    RandomStream pick = root.fork("data");
    RandomStream time = root.fork("timestep");
    RandomStream noise = root.fork("noise");
    RandomStream resolution = root.fork("resolution");

    constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    std::vector<std::vector<double>> m, v;
    for (const auto& e : out.params.entries()) {
        m.emplace_back(static_cast<size_t>(e.value.numel()), 0.0);
        v.emplace_back(static_cast<size_t>(e.value.numel()), 0.0);
    }

    double window = 0.0;
    for (int64_t step = 1; step <= steps; ++step) {
        std::map<std::string, Tensor> grads;
        double batch_loss = 0.0;
        for (int64_t b = 0; b < batch; ++b) {
            const auto k = static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(data.prior_images.size())));
            const int t = static_cast<int>(time.uniform_int(0, model.config().t_max));
            const double u = resolution.uniform();
            const auto pick_ratio = resolution.uniform_int(0, std::max<int64_t>(1, static_cast<int64_t>(low_ratios.size())));
            const Tensor x = u < low_fraction ? downsample(data.prior_images[k], low_ratios[static_cast<size_t>(pick_ratio)])
                                              : data.prior_images[k];
            const Tensor eps = seeded_normal(x.shape(), noise.next_u64());
            Graph g;
            Var l = model.loss(g, out.params, x, data.prior_labels[k], t, eps);
            batch_loss += g.value(l).item();
            for (auto& [name, grad] : g.backward(l)) {
                auto [it, fresh] = grads.try_emplace(name, std::move(grad));
                if (!fresh) {
                    for (int64_t i = 0; i < grad.numel(); ++i) it->second[i] += grad[i];
                }
            }
        }
        window += batch_loss / static_cast<double>(batch);

        const double lr_t = lr * std::min(1.0, 2.0 * static_cast<double>(steps - step + 1) / static_cast<double>(steps));
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        auto& entries = out.params.entries();
        for (size_t e = 0; e < entries.size(); ++e) {
            auto it = grads.find(entries[e].name);
            if (it == grads.end()) continue;
            const Tensor& gr = it->second;
            float* p = entries[e].value.ptr();
            for (int64_t i = 0; i < gr.numel(); ++i) {
                const double gi = gr[i] / static_cast<double>(batch);
                auto& mi = m[e][static_cast<size_t>(i)];
                auto& vi = v[e][static_cast<size_t>(i)];
                mi = b1 * mi + (1.0 - b1) * gi;
                vi = b2 * vi + (1.0 - b2) * gi * gi;
                p[i] -= static_cast<float>(lr_t * (mi / c1) / (std::sqrt(vi / c2) + adam_eps));
            }
        }

        if (step % log_every == 0 || step == steps) {
            const int64_t span = step % log_every == 0 ? log_every : step % log_every;
            out.window_losses.push_back(window / static_cast<double>(span));
            if (log != nullptr) *log << "pretrain step " << step << " loss " << out.window_losses.back() << '\n';
            window = 0.0;
        }
    }
    const size_t tail = std::min<size_t>(3, out.window_losses.size());
    double sum = 0.0;
    for (size_t i = out.window_losses.size() - tail; i < out.window_losses.size(); ++i) sum += out.window_losses[i];
    out.final_loss = sum / static_cast<double>(tail);
    out.reached_target = out.final_loss <= cfg.get_double("pretrain.target_loss");
    return out;
}

ParameterSet personalization_params(const Denoiser& model, const ParameterSet& base, const ToyDataset& data,
                                    uint64_t seed) {
    ParameterSet p = base;
    model.attach_lora(p, RandomStream(seed).fork("lora").seed());
    model.init_subject_token(p, data.config.subject_class);
    return p;
}

TrainConfig train_config(const Config& cfg, uint64_t seed) {
    TrainConfig tc;
    tc.i_max = cfg.get_int("train.i_max");
    tc.seed = seed;
    tc.eval_every = cfg.get_int("train.eval_every");
    if (tc.eval_every == 0) tc.eval_every = std::max<int64_t>(1, tc.i_max / 10);
    tc.t_lo = static_cast<int>(cfg.get_int("train.t_lo"));
    tc.t_hi = static_cast<int>(cfg.get_int("train.t_hi"));
    tc.warmup_bp_steps = cfg.get_int("train.warmup_bp_steps");
    tc.max_abort_fraction = cfg.get_double("train.max_abort_fraction");

    tc.selector.mode = parse_selector_mode(cfg.get("selector.mode"));
    tc.selector.k = cfg.get_double("selector.k");
    tc.selector.t_mid = cfg.get_double("selector.t_mid");
    tc.selector.t_max = static_cast<double>(cfg.get_int("model.t_max"));
    tc.selector.i_max = static_cast<double>(tc.i_max);

    tc.bp.eta = cfg.get_double("bp.eta");
    tc.bp.resize_ratio = cfg.get_double("bp.resize_ratio");
    if (const double clip = cfg.get_double("bp.grad_clip"); clip > 0.0) tc.bp.grad_clip = clip;

    tc.zo.epsilon = cfg.get_double("zo.epsilon");
    tc.zo.alpha = cfg.get_double("zo.alpha");
    tc.zo.num_perturbations = static_cast<int>(cfg.get_int("zo.num_perturbations"));
    tc.zo.scale_epsilon_by_rms = cfg.get_bool("zo.scale_epsilon_by_rms");
    return tc;
}

EvalSpec eval_spec(const Config& cfg, const ToyDataset& data) {
    EvalSpec s;
    s.subject_templates = data.subject_templates;
    s.prior_templates = data.prior_templates;
    s.samples = static_cast<int>(cfg.get_int("eval.samples"));
    s.prior_samples = static_cast<int>(cfg.get_int("eval.prior_samples"));
    s.sampler_steps = static_cast<int>(cfg.get_int("eval.sampler_steps"));
    s.seed = static_cast<uint64_t>(cfg.get_int("eval.seed"));
    return s;
}

std::vector<ArchSpec> benchmark_archs(const Config& cfg) {
    std::vector<ArchSpec> out;
    for (int64_t ch : cfg.get_ints("mem.channels")) {
        DenoiserConfig mc = model_config(cfg);
        mc.channels = static_cast<int>(ch);
        Denoiser model(mc);
        ParameterSet p = model.init_params(0);
        model.attach_lora(p, 0);
        out.push_back(describe("denoiser-c" + std::to_string(ch), model, p));
    }
    return out;
}

int64_t predicted_run_peak_elements(const ArchSpec& arch, const TrainConfig& tc, int64_t resolution) {
    const bool bp_possible = tc.selector.mode != SelectorMode::always_zo || tc.warmup_bp_steps > 0;
    const bool zo_possible = tc.selector.mode != SelectorMode::always_bp;
    int64_t peak = 0;
    if (bp_possible) {
        const int64_t low = resized_extent(resolution, tc.bp.resize_ratio);
        peak = std::max(peak, predict(arch, low, low, MemBranch::bp).total_elements);
    }
    if (zo_possible) peak = std::max(peak, predict(arch, resolution, resolution, MemBranch::zo).total_elements);
    return peak;
}

namespace {

TrainConfig with_mode(TrainConfig tc, SelectorMode mode, double ratio) {
    tc.selector.mode = mode;
    tc.bp.resize_ratio = ratio;
    return tc;
}

std::string ratio_tag(double r) {
    std::string s = format_double(r);
    return "r" + s;
}

}  // namespace

std::vector<AblationCell> ablation_cells(const std::string& preset, const Config& cfg, uint64_t seed) {
    const TrainConfig base = train_config(cfg, seed);
    const double r = base.bp.resize_ratio;
    std::vector<AblationCell> cells;
    if (preset == "observation1") {
        cells.push_back({"zo_from_scratch", with_mode(base, SelectorMode::always_zo, r)});
        TrainConfig warm = with_mode(base, SelectorMode::always_zo, r);
        warm.warmup_bp_steps = static_cast<int64_t>(std::llround(0.3 * static_cast<double>(base.i_max)));
        cells.push_back({"zo_after_bp_warmup", warm});
    } else if (preset == "observation2") {
        const int t_max = static_cast<int>(base.selector.t_max);
        for (double ratio : {0.5, 1.0}) {
            for (int q = 0; q < 4; ++q) {
                TrainConfig tc = with_mode(base, SelectorMode::always_bp, ratio);
                tc.t_lo = q * t_max / 4;
                tc.t_hi = (q + 1) * t_max / 4;
                cells.push_back({"bp_" + ratio_tag(ratio) + "_t" + std::to_string(tc.t_lo) + "-" + std::to_string(tc.t_hi),
                                 tc});
            }
        }
    } else if (preset == "main" || preset == "grid") {
        std::vector<double> ratios{r};
        if (preset == "grid") ratios = cfg.get_doubles("ablate.ratios");
        cells.push_back({"bp_high", with_mode(base, SelectorMode::always_bp, 1.0)});
        cells.push_back({"zo_only", with_mode(base, SelectorMode::always_zo, r)});
        for (double ratio : ratios) {
            const std::string tag = "_" + ratio_tag(ratio);
            cells.push_back({"bp_low" + tag, with_mode(base, SelectorMode::always_bp, ratio)});
            cells.push_back({"tap" + tag, with_mode(base, SelectorMode::tap, ratio)});
            cells.push_back({"dtap" + tag, with_mode(base, SelectorMode::dtap, ratio)});
            cells.push_back({"uniform_random" + tag, with_mode(base, SelectorMode::uniform_random, ratio)});
            cells.push_back({"reversed" + tag, with_mode(base, SelectorMode::reversed, ratio)});
        }
    } else {
        throw ConfigError("unknown ablate.preset '" + preset + "'; valid presets: observation1, observation2, main, grid");
    }
    return cells;
}

Experiment::Experiment(const Config& cfg, const ParameterSet& base)
    : cfg_(cfg), model_(model_config(cfg)), data_(load_dataset(cfg)), base_(base), spec_(eval_spec(cfg, data_)) {
    prepare_reference(model_, base_, spec_);
    ParameterSet probe = personalization_params(model_, base_, data_, 0);
    arch_ = describe("denoiser-c" + std::to_string(model_.config().channels), model_, probe);
}

EvalMetrics Experiment::evaluate(const ParameterSet& params) const { return hybrid::evaluate(model_, params, spec_); }

TrainResult Experiment::run(const TrainConfig& tc, bool evaluate_during) const {
    ParameterSet init = personalization_params(model_, base_, data_, tc.seed);
    TrainConfig c = tc;
    if (!evaluate_during) c.eval_every = 0;
    const EvalFn eval = [this](const ParameterSet& p) { return evaluate(p); };
    return train(model_, c, std::move(init), data_.subject_images, model_.subject_token(), eval);
}

AblationRow Experiment::run_cell(const AblationCell& cell) const {
    const TrainResult r = run(cell.train);
    AblationRow row;
    row.cell = cell.name;
    row.seed = cell.train.seed;
    row.train = cell.train;
    row.metrics = r.evals.back().metrics;
    row.bp_steps = r.bp_steps;
    row.zo_steps = r.zo_steps;
    row.aborted = r.aborted;
    row.run_peak_elements = r.run_peak_elements;
    row.predicted_peak_elements = predicted_run_peak_elements(arch_, cell.train, Denoiser::kFullResolution);
    row.failed = r.failed;
    return row;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
    os << "cell,seed,mode,resize_ratio,t_lo,t_hi,warmup_bp_steps,subject_fidelity,structure_score,prior_drift,"
          "bp_steps,zo_steps,aborted,run_peak_bytes,predicted_peak_bytes,status\n";
    for (const auto& r : rows) {
        os << r.cell << ',' << r.seed << ',' << to_string(r.train.selector.mode) << ','
           << format_double(r.train.bp.resize_ratio) << ',' << r.train.t_lo << ',' << r.train.t_hi << ','
           << r.train.warmup_bp_steps << ',' << format_double(r.metrics.subject_fidelity) << ','
           << format_double(r.metrics.structure_score) << ',' << format_double(r.metrics.prior_drift) << ','
           << r.bp_steps << ',' << r.zo_steps << ',' << r.aborted << ',' << 4 * r.run_peak_elements << ','
           << 4 * r.predicted_peak_elements << ',' << (r.failed ? "failed" : r.metrics.diverged ? "diverged" : "ok") << '\n';
    }
}

void write_scheduler_probe(std::ostream& os, const SelectorConfig& base, const std::vector<int64_t>& i_values,
                           int t_stride) {
    if (t_stride < 1) throw ConfigError("probe.t_stride must be positive");
    base.validate();
    os << "t,tap";
    for (int64_t i : i_values) os << ",dtap_i" << i;
    os << '\n';
    const int t_max = static_cast<int>(base.t_max);
    for (int t = 0; t < t_max; t += t_stride) {
        os << t << ',' << format_double(tap_probability(t, base));
        for (int64_t i : i_values) os << ',' << format_double(dtap_probability(static_cast<double>(i), t, base));
        os << '\n';
    }
}

}  // namespace hybrid
