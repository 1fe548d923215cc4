// SPDX-License-Identifier: Apache-2.0
//
// hybridopt: dataset generation, pretraining, personalization runs,
// ablations, scheduler probes, memory reports and evaluation.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "hybrid/harness.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hybrid;

namespace {

struct Common {
    std::string config_path;
    uint64_t seed = 0;
    std::string out = "out";
    std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "key = value config file");
    sub->add_option("--seed", c.seed, "master seed")->default_val(0);
    sub->add_option("--out", c.out, "output directory")->default_val("out");
    sub->add_option("--set", c.overrides, "extra key=value settings applied after the file");
}

Config load_config(const Common& c) {
    Config cfg = c.config_path.empty() ? Config() : Config::load(c.config_path);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

void write_manifest(const fs::path& dir, const std::string& command, const Config& cfg, const Common& c,
                    const json& extra) {
    json m;
    m["command"] = command;
    m["config_hash"] = cfg.hash();
    m["config_file"] = c.config_path;
    m["config"] = cfg.canonical();
    m["seed"] = c.seed;
    m["data_seed"] = cfg.get_int("data.seed");
    m["git_describe"] = code_version();
    m["results"] = extra;
    auto os = open_out(dir / "manifest.json");
    os << m.dump(2) << '\n';
}

ParameterSet load_base(const Config& cfg) {
    const std::string& path = cfg.get("checkpoint");
    if (path.empty()) throw CheckpointError("no checkpoint configured; set 'checkpoint = <file>' or run pretrain first");
    if (!fs::exists(path)) throw CheckpointError("checkpoint not found: " + path);
    return load_checkpoint(path);
}

json metrics_json(const EvalMetrics& m) {
    return {{"subject_fidelity", m.subject_fidelity},
            {"structure_score", m.structure_score},
            {"prior_drift", m.prior_drift}};
}

int cmd_gen_data(const Common& c) {
    Config cfg = load_config(c);
    // The dataset seed comes from --seed here so regenerated sets are explicit.
    cfg.set("data.seed", std::to_string(c.seed));
    const ToyDataset d = load_dataset(cfg);
    fs::create_directories(c.out);
    const fs::path out(c.out);
    write_pgm((out / "prior.pgm").string(), d.prior_images, 32);
    write_pgm((out / "subject.pgm").string(), d.subject_images, 8);
    std::vector<Tensor> templ;
    for (const auto& cls : d.prior_templates) templ.insert(templ.end(), cls.begin(), cls.end());
    write_pgm((out / "templates.pgm").string(), templ, static_cast<int64_t>(d.config.templates_per_class));
    ParameterSet images;
    for (size_t i = 0; i < d.prior_images.size(); ++i)
        images.add("prior/" + std::to_string(d.prior_labels[i]) + "/" + std::to_string(i), d.prior_images[i], false);
    for (size_t i = 0; i < d.subject_images.size(); ++i) images.add("subject/" + std::to_string(i), d.subject_images[i], false);
    save_checkpoint(images, (out / "dataset.bin").string());
    write_manifest(out, "gen-data", cfg, c,
                   {{"generator_version", ToyDataset::kGeneratorVersion},
                    {"prior_images", d.prior_images.size()},
                    {"subject_images", d.subject_images.size()}});
    return 0;
}

int cmd_pretrain(const Common& c) {
    const Config cfg = load_config(c);
    const Denoiser model(model_config(cfg));
    const ToyDataset d = load_dataset(cfg);
    fs::create_directories(c.out);
    const fs::path out(c.out);
    const PretrainResult r = pretrain(model, d, cfg, c.seed, &std::cerr);
    save_checkpoint(r.params, (out / "base.ckpt").string());
    {
        auto os = open_out(out / "pretrain_loss.csv");
        os << "window,step,loss\n";
        const int64_t every = cfg.get_int("pretrain.log_every");
        for (size_t i = 0; i < r.window_losses.size(); ++i)
            os << i << ',' << std::min<int64_t>(static_cast<int64_t>(i + 1) * every, cfg.get_int("pretrain.steps")) << ','
               << format_double(r.window_losses[i]) << '\n';
    }
    std::vector<double> structure;
    EvalSpec spec = eval_spec(cfg, d);
    for (size_t cls = 0; cls < d.prior_templates.size(); ++cls) {
        std::vector<Tensor> samples;
        for (int k = 0; k < spec.samples; ++k)
            samples.push_back(model.sample(r.params, static_cast<int>(cls), spec.sampler_steps,
                                           eval_sample_seed(spec, static_cast<int>(cls), k)));
        structure.push_back(structure_score(samples, d.prior_templates[cls]));
    }
    write_manifest(out, "pretrain", cfg, c,
                   {{"final_loss", r.final_loss},
                    {"target_loss", cfg.get_double("pretrain.target_loss")},
                    {"reached_target", r.reached_target},
                    {"class_structure_score", structure}});
    if (!r.reached_target) {
        std::cerr << "pretrain: final loss " << r.final_loss << " above target " << cfg.get_double("pretrain.target_loss")
                  << " after " << cfg.get_int("pretrain.steps") << " steps\n";
        return 2;
    }
    return 0;
}

int cmd_personalize(const Common& c) {
    const Config cfg = load_config(c);
    const ParameterSet base = load_base(cfg);
    const Experiment ex(cfg, base);
    fs::create_directories(c.out);
    const fs::path out(c.out);
    const TrainConfig tc = train_config(cfg, c.seed);
    if (tc.selector.end_midpoint_negative())
        std::cerr << "warning: 2 * t_mid < t_max, the dynamic midpoint ends below zero\n";
    const TrainResult r = ex.run(tc, true);
    {
        auto os = open_out(out / "metrics.csv");
        write_records_csv(os, r.records);
    }
    {
        auto os = open_out(out / "timing.csv");
        write_timing_csv(os, r.records);
    }
    {
        auto os = open_out(out / "evals.csv");
        write_evals_csv(os, r.evals);
    }
    save_checkpoint(r.params, (out / "personalized.ckpt").string());
    write_manifest(out, "personalize", cfg, c,
                   {{"bp_steps", r.bp_steps},
                    {"zo_steps", r.zo_steps},
                    {"aborted", r.aborted},
                    {"run_peak_bytes", 4 * r.run_peak_elements},
                    {"final", metrics_json(r.evals.back().metrics)},
                    {"status", r.failed ? "failed" : "ok"}});
    if (r.failed) {
        std::cerr << "personalize: " << r.aborted << " of " << tc.i_max << " steps aborted\n";
        return 3;
    }
    return 0;
}

int cmd_ablate(const Common& c) {
    const Config cfg = load_config(c);
    const ParameterSet base = load_base(cfg);
    const Experiment ex(cfg, base);
    fs::create_directories(c.out);
    const std::string preset = cfg.get("ablate.preset");
    std::vector<AblationRow> rows;
    for (int64_t s = 0; s < cfg.get_int("ablate.seeds"); ++s) {
        for (const auto& cell : ablation_cells(preset, cfg, c.seed + static_cast<uint64_t>(s))) {
            rows.push_back(ex.run_cell(cell));
            const auto& r = rows.back();
            std::cerr << cell.name << " seed " << r.seed << " fidelity " << r.metrics.subject_fidelity << " structure "
                      << r.metrics.structure_score << '\n';
        }
    }
    auto os = open_out(fs::path(c.out) / "ablation.csv");
    write_ablation_csv(os, rows);
    write_manifest(c.out, "ablate", cfg, c, {{"preset", preset}, {"runs", rows.size()}});
    return 0;
}

int cmd_probe(const Common& c) {
    const Config cfg = load_config(c);
    SelectorConfig s;
    s.k = cfg.get_double("selector.k");
    s.t_mid = cfg.get_double("selector.t_mid");
    s.t_max = static_cast<double>(cfg.get_int("model.t_max"));
    s.i_max = static_cast<double>(cfg.get_int("probe.i_max"));
    fs::create_directories(c.out);
    auto os = open_out(fs::path(c.out) / "scheduler.csv");
    write_scheduler_probe(os, s, cfg.get_ints("probe.i_values"), static_cast<int>(cfg.get_int("probe.t_stride")));
    write_manifest(c.out, "probe-scheduler", cfg, c, {{"t_start", t_dyn(0, s)}, {"t_end", t_dyn(s.i_max, s)}});
    return 0;
}

int cmd_mem_report(const Common& c) {
    const Config cfg = load_config(c);
    fs::create_directories(c.out);
    const auto archs = benchmark_archs(cfg);
    const auto rows = report(archs, cfg.get_doubles("mem.ratios"), cfg.get_int("mem.resolution"));
    auto os = open_out(fs::path(c.out) / "memory.csv");
    write_report_csv(os, rows);
    write_manifest(c.out, "mem-report", cfg, c, {{"archs", archs.size()}, {"rows", rows.size()}});
    return 0;
}

int cmd_eval(const Common& c, const std::string& params_path) {
    const Config cfg = load_config(c);
    const ParameterSet base = load_base(cfg);
    const Experiment ex(cfg, base);
    ParameterSet params = base;
    if (!params_path.empty()) {
        if (!fs::exists(params_path)) throw CheckpointError("checkpoint not found: " + params_path);
        params = load_checkpoint(params_path);
    }
    const EvalMetrics m = ex.evaluate(params);
    fs::create_directories(c.out);
    auto os = open_out(fs::path(c.out) / "eval.csv");
    os << "subject_fidelity,structure_score,prior_drift\n"
       << format_double(m.subject_fidelity) << ',' << format_double(m.structure_score) << ','
       << format_double(m.prior_drift) << '\n';
    write_manifest(c.out, "eval", cfg, c, {{"params", params_path}, {"metrics", metrics_json(m)}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid BP-low / ZO-high personalization toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    Common gen, pre, pers, abl, probe, mem, ev;
    std::string eval_params;
    auto* s_gen = app.add_subcommand("gen-data", "render the toy prior and subject sets");
    add_common(s_gen, gen);
    auto* s_pre = app.add_subcommand("pretrain", "train the base denoiser on the prior set");
    add_common(s_pre, pre);
    auto* s_pers = app.add_subcommand("personalize", "one personalization run");
    add_common(s_pers, pers);
    auto* s_abl = app.add_subcommand("ablate", "run an ablation preset over several seeds");
    add_common(s_abl, abl);
    auto* s_probe = app.add_subcommand("probe-scheduler", "tabulate TAP and DTAP probabilities");
    add_common(s_probe, probe);
    auto* s_mem = app.add_subcommand("mem-report", "predicted BP / ZO / peak memory table");
    add_common(s_mem, mem);
    auto* s_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(s_eval, ev);
    s_eval->add_option("--params", eval_params, "personalized checkpoint (default: the base)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*s_gen) return cmd_gen_data(gen);
        if (*s_pre) return cmd_pretrain(pre);
        if (*s_pers) return cmd_personalize(pers);
        if (*s_abl) return cmd_ablate(abl);
        if (*s_probe) return cmd_probe(probe);
        if (*s_mem) return cmd_mem_report(mem);
        if (*s_eval) return cmd_eval(ev, eval_params);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
