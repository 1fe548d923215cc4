// SPDX-License-Identifier: Apache-2.0
#include "hybrid/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hybrid/random.hpp"

namespace hybrid {

const std::vector<ConfigKey>& config_registry() {
    static const std::vector<ConfigKey> keys = {
        {"data.seed", "7", "dataset generator seed"},
        {"data.prior_per_class", "64", "prior images per class"},
        {"data.subject_renders", "4", "personalization renders of the subject"},
        {"data.templates_per_class", "16", "held-out templates per prior class"},
        {"data.subject_class", "2", "prior class the subject belongs to"},
        {"model.channels", "16", "denoiser width"},
        {"model.lora_rank", "4", "adapter rank, 0 trains every tensor"},
        {"model.time_bins", "32", "timestep embedding bins"},
        {"model.t_max", "1000", "diffusion steps"},
        {"model.mid_blocks", "4", "blocks at the coarsest level"},
        {"model.pixel_coordinates", "false", "coordinate planes in pixel units (false: normalized to the image)"},
        {"model.init_seed", "1", "base parameter initialisation seed"},
        {"pretrain.steps", "12000", "Adam steps"},
        {"pretrain.batch", "4", "images per Adam step"},
        {"pretrain.lr", "0.002", "Adam learning rate"},
        {"pretrain.target_loss", "0.12", "required final moving-average loss"},
        {"pretrain.log_every", "200", "loss logging cadence"},
        {"pretrain.low_res_fraction", "0.5", "share of pretraining images drawn at a reduced resolution"},
        {"pretrain.low_res_ratios", "0.5,0.625,0.75", "resize ratios used for reduced-resolution pretraining"},
        {"checkpoint", "", "base checkpoint for personalize, ablate and eval"},
        {"train.i_max", "1500", "personalization steps"},
        {"train.eval_every", "0", "evaluation cadence, 0 = i_max/10"},
        {"train.t_lo", "0", "lowest sampled timestep"},
        {"train.t_hi", "-1", "exclusive upper timestep, -1 = t_max"},
        {"train.warmup_bp_steps", "0", "leading steps forced onto BP-low"},
        {"train.max_abort_fraction", "0.01", "abort rate that fails the run"},
        {"selector.mode", "DTAP", "TAP, DTAP, ALWAYS_BP, ALWAYS_ZO, UNIFORM_RANDOM or REVERSED"},
        {"selector.k", "0.05", "sigmoid steepness"},
        {"selector.t_mid", "750", "sigmoid midpoint"},
        {"bp.eta", "1", "BP learning rate"},
        {"bp.resize_ratio", "0.5", "BP-low spatial scale"},
        {"bp.grad_clip", "0.5", "global gradient norm clip, 0 = off"},
        {"zo.epsilon", "0.001", "perturbation scale"},
        {"zo.alpha", "0.01", "ZO learning rate"},
        {"zo.num_perturbations", "4", "probes per step"},
        {"zo.scale_epsilon_by_rms", "true", "multiply epsilon by the trainable RMS"},
        {"eval.samples", "8", "subject samples per evaluation"},
        {"eval.prior_samples", "2", "samples per prior class for drift"},
        {"eval.sampler_steps", "50", "sampler timesteps"},
        {"eval.seed", "1234", "sampler seed base"},
        {"ablate.preset", "main", "observation1, observation2, main or grid"},
        {"ablate.seeds", "5", "seeds per cell"},
        {"ablate.ratios", "0.5,0.625,0.75", "BP-low ratios for the grid preset"},
        {"probe.i_values", "0,250,500,750,1000", "training steps probed"},
        {"probe.t_stride", "1", "timestep stride"},
        {"probe.i_max", "1000", "i_max used by the probe"},
        {"mem.ratios", "0.5,0.625,0.75,1.0", "resize ratios reported"},
        {"mem.channels", "8,16,32", "benchmark widths"},
        {"mem.resolution", "32", "full resolution"},
    };
    return keys;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string valid_keys() {
    std::string out;
    for (const auto& k : config_registry()) {
        if (!out.empty()) out += ", ";
        out += k.name;
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
    return out;
}

int64_t to_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": not an integer: '" + v + "'");
    return out;
}

}  // namespace

Config::Config() {
    for (const auto& k : config_registry()) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys());
    it->second = value;
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys());
    return it->second;
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        try {
            cfg.set(key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
}

double Config::get_double(const std::string& key) const { return to_double(key, get(key)); }

int64_t Config::get_int(const std::string& key) const { return to_int(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key + ": not a boolean: '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(get(key))) out.push_back(to_double(key, item));
    return out;
}

std::vector<int64_t> Config::get_ints(const std::string& key) const {
    std::vector<int64_t> out;
    for (const auto& item : split_list(get(key))) out.push_back(to_int(key, item));
    return out;
}

std::string Config::canonical() const {
    std::string out;
    for (const auto& k : config_registry()) out += k.name + " = " + values_.at(k.name) + "\n";
    return out;
}

std::string Config::hash() const {
    const uint64_t h = hash_label(canonical());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace hybrid
