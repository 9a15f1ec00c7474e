// clevercatch/config.hpp
// Run configuration: an INI-style file with one section per module.
//
//   # comment
//   [detector]
//   lambda = 0.5
//   hidden = 64,32
//
// Every key must be known; values are parsed before any stage runs.
// Overrides use the dotted form "section.key=value".
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "clevercatch/alignment.hpp"
#include "clevercatch/detector.hpp"
#include "clevercatch/embedding.hpp"
#include "clevercatch/evaluation.hpp"
#include "clevercatch/error.hpp"
#include "clevercatch/features.hpp"
#include "clevercatch/io.hpp"
#include "clevercatch/json_io.hpp"
#include "clevercatch/rng.hpp"
#include "clevercatch/rules.hpp"
#include "clevercatch/simulator.hpp"

namespace clevercatch {

struct PathConfig {
    std::string claims = "claims.csv";
    std::string rules = "rules.csv";
    std::string labels = "labels_train.csv";      // visible labels used for training
    std::string eval_labels = "labels_eval.csv";  // labels used for evaluation
    std::string features = "features.csv";
    std::string encoders = "encoders.json";
    std::string detector = "detector.json";
    std::string scores = "scores.csv";
    std::string targets = "drug_targets.csv";
    std::string opioids = "opioids.csv";
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    PathConfig paths;
    SimConfig simulator;
    FeatureMode feature_mode = FeatureMode::full;
    GapThresholds gaps;
    double opioid_default_weight = 0.5;
    PretrainConfig pretrain;
    AlignmentSettings alignment;
    DetectorConfig detector;
    std::vector<std::size_t> k_list = default_k_list();
    double threshold = 0.5;
    std::vector<std::string> ablation_groups{"cost_preference", "opioid"};
    std::vector<std::uint64_t> ablation_seeds;  // empty: the root seed only

    // Per-stage seeds, fanned out from the root seed by fixed labels.
    std::uint64_t stage(std::string_view label) const { return stage_seed(seed, label); }
};

namespace detail {

inline bool parse_bool(std::string_view v, const std::string& where) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(where + ": expected a boolean, got '" + std::string(v) + "'");
}

inline std::uint64_t parse_u64(std::string_view v, const std::string& where) {
    std::int64_t x;
    try {
        x = parse_int(v, where);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
    if (x < 0) throw ConfigError(where + ": expected a non-negative integer");
    return static_cast<std::uint64_t>(x);
}

inline double parse_real(std::string_view v, const std::string& where) {
    try {
        return parse_double(v, where);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

template <class T>
std::vector<T> parse_list(std::string_view v, const std::string& where) {
    std::vector<T> out;
    if (trim(v).empty()) return out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const std::size_t comma = v.find(',', start);
        const std::string_view item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
        if constexpr (std::is_same_v<T, std::string>) out.emplace_back(item);
        else out.push_back(static_cast<T>(parse_u64(item, where)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <class T>
std::string join_list(const std::vector<T>& xs) {
    std::string s;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (k) s += ",";
        if constexpr (std::is_same_v<T, std::string>) s += xs[k];
        else s += std::to_string(xs[k]);
    }
    return s;
}

inline OptimizerKind parse_optimizer(std::string_view v, const std::string& where) {
    if (v == "adam") return OptimizerKind::adam;
    if (v == "sgd") return OptimizerKind::sgd;
    throw ConfigError(where + ": optimizer must be 'adam' or 'sgd'");
}

inline std::string optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

struct ConfigKey {
    std::function<void(RunConfig&, std::string_view, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define CC_REAL(field)                                                                                         \
    ConfigKey {                                                                                                \
        [](RunConfig& c, std::string_view v, const std::string& w) { c.field = parse_real(v, w); },           \
            [](const RunConfig& c) { return format_double(c.field); }                                          \
    }
#define CC_SIZE(field)                                                                                         \
    ConfigKey {                                                                                                \
        [](RunConfig& c, std::string_view v, const std::string& w) {                                           \
            c.field = static_cast<decltype(c.field)>(parse_u64(v, w));                                         \
        },                                                                                                     \
            [](const RunConfig& c) { return std::to_string(c.field); }                                         \
    }
#define CC_TEXT(field)                                                                                         \
    ConfigKey {                                                                                                \
        [](RunConfig& c, std::string_view v, const std::string&) { c.field = std::string(v); },               \
            [](const RunConfig& c) { return c.field; }                                                         \
    }
#define CC_BOOL(field)                                                                                         \
    ConfigKey {                                                                                                \
        [](RunConfig& c, std::string_view v, const std::string& w) { c.field = parse_bool(v, w); },           \
            [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }                         \
    }
#define CC_SIZES(field)                                                                                        \
    ConfigKey {                                                                                                \
        [](RunConfig& c, std::string_view v, const std::string& w) { c.field = parse_list<std::size_t>(v, w); }, \
            [](const RunConfig& c) { return join_list(c.field); }                                              \
    }
#define CC_OPT(field)                                                                                          \
    ConfigKey {                                                                                                \
        [](RunConfig& c, std::string_view v, const std::string& w) { c.field = parse_optimizer(v, w); },      \
            [](const RunConfig& c) { return optimizer_name(c.field); }                                         \
    }

// Ordered so that config snapshots are stable.
inline const std::vector<std::pair<std::string, ConfigKey>>& config_keys() {
    static const std::vector<std::pair<std::string, ConfigKey>> keys{
        {"run.seed", CC_SIZE(seed)},
        {"run.out_dir", CC_TEXT(out_dir)},
        {"paths.claims", CC_TEXT(paths.claims)},
        {"paths.rules", CC_TEXT(paths.rules)},
        {"paths.labels", CC_TEXT(paths.labels)},
        {"paths.eval_labels", CC_TEXT(paths.eval_labels)},
        {"paths.features", CC_TEXT(paths.features)},
        {"paths.encoders", CC_TEXT(paths.encoders)},
        {"paths.detector", CC_TEXT(paths.detector)},
        {"paths.scores", CC_TEXT(paths.scores)},
        {"paths.targets", CC_TEXT(paths.targets)},
        {"paths.opioids", CC_TEXT(paths.opioids)},
        {"simulator.n_providers", CC_SIZE(simulator.n_providers)},
        {"simulator.n_drugs", CC_SIZE(simulator.n_drugs)},
        {"simulator.n_years", CC_SIZE(simulator.n_years)},
        {"simulator.fraud_rate", CC_REAL(simulator.fraud_rate)},
        {"simulator.scenario_mix", CC_REAL(simulator.scenario_mix)},
        {"simulator.beta", CC_REAL(simulator.beta)},
        {"simulator.concentration", CC_REAL(simulator.concentration)},
        {"simulator.focus", CC_REAL(simulator.focus)},
        {"simulator.n_pairs", CC_SIZE(simulator.n_pairs)},
        {"simulator.n_opioids", CC_SIZE(simulator.n_opioids)},
        {"simulator.mean_volume", CC_REAL(simulator.mean_volume)},
        {"simulator.label_fraction", CC_REAL(simulator.label_fraction)},
        {"simulator.opioid_weight", CC_REAL(simulator.opioid_weight)},
        {"features.mode",
         ConfigKey{[](RunConfig& c, std::string_view v, const std::string& w) {
                       try {
                           c.feature_mode = feature_mode_from_string(v);
                       } catch (const Error& e) {
                           throw ConfigError(w + ": " + e.what());
                       }
                   },
                   [](const RunConfig& c) { return std::string(to_string(c.feature_mode)); }}},
        {"rules.gap_moderate", CC_REAL(gaps.moderate)},
        {"rules.gap_high", CC_REAL(gaps.high)},
        {"rules.gap_extreme", CC_REAL(gaps.extreme)},
        {"rules.opioid_default_weight", CC_REAL(opioid_default_weight)},
        {"pretrain.latent", CC_SIZE(pretrain.latent)},
        {"pretrain.dim", CC_SIZE(pretrain.dim)},
        {"pretrain.rule_hidden", CC_SIZES(pretrain.rule_hidden)},
        {"pretrain.sample_hidden", CC_SIZES(pretrain.sample_hidden)},
        {"pretrain.margin", CC_REAL(pretrain.margin)},
        {"pretrain.epochs", CC_SIZE(pretrain.epochs)},
        {"pretrain.batch", CC_SIZE(pretrain.batch)},
        {"pretrain.holdout", CC_REAL(pretrain.holdout)},
        {"pretrain.triplets", CC_SIZE(pretrain.triplets.count)},
        {"pretrain.sigma", CC_REAL(pretrain.triplets.sigma)},
        {"pretrain.band_lo", CC_REAL(pretrain.triplets.lo)},
        {"pretrain.band_hi", CC_REAL(pretrain.triplets.hi)},
        {"pretrain.weight_floor", CC_REAL(pretrain.triplets.weight_floor)},
        {"pretrain.optimizer", CC_OPT(pretrain.optimizer.kind)},
        {"pretrain.learning_rate", CC_REAL(pretrain.optimizer.learning_rate)},
        {"alignment.epsilon_scale", CC_REAL(alignment.epsilon_scale)},
        {"alignment.epsilon_fixed", CC_REAL(alignment.epsilon_fixed)},
        {"alignment.max_iters", CC_SIZE(alignment.sinkhorn.max_iters)},
        {"alignment.tol", CC_REAL(alignment.sinkhorn.tol)},
        {"alignment.tau", CC_REAL(alignment.tau)},
        {"alignment.epsilon", CC_REAL(alignment.epsilon)},
        {"alignment.momentum", CC_REAL(alignment.momentum)},
        {"alignment.weighted_columns", CC_BOOL(alignment.weighted_columns)},
        {"alignment.weight_floor", CC_REAL(alignment.weight_floor)},
        {"detector.hidden", CC_SIZES(detector.hidden)},
        {"detector.lambda", CC_REAL(detector.lambda)},
        {"detector.epochs", CC_SIZE(detector.epochs)},
        {"detector.batch", CC_SIZE(detector.batch)},
        {"detector.optimizer", CC_OPT(detector.optimizer.kind)},
        {"detector.learning_rate", CC_REAL(detector.optimizer.learning_rate)},
        {"evaluation.k_list", CC_SIZES(k_list)},
        {"evaluation.threshold", CC_REAL(threshold)},
        {"evaluation.ablation_groups",
         ConfigKey{[](RunConfig& c, std::string_view v, const std::string& w) {
                       c.ablation_groups = parse_list<std::string>(v, w);
                       for (const auto& g : c.ablation_groups)
                           if (g != "cost_preference" && g != "opioid")
                               throw ConfigError(w + ": unknown ablation group '" + g + "'");
                   },
                   [](const RunConfig& c) { return join_list(c.ablation_groups); }}},
        {"evaluation.ablation_seeds",
         ConfigKey{[](RunConfig& c, std::string_view v, const std::string& w) {
                       c.ablation_seeds = parse_list<std::uint64_t>(v, w);
                   },
                   [](const RunConfig& c) { return join_list(c.ablation_seeds); }}},
    };
    return keys;
}

#undef CC_REAL
#undef CC_SIZE
#undef CC_TEXT
#undef CC_BOOL
#undef CC_SIZES
#undef CC_OPT

}  // namespace detail

inline void set_config_value(RunConfig& cfg, const std::string& key, std::string_view value, const std::string& where) {
    for (const auto& [name, k] : detail::config_keys()) {
        if (name == key) {
            k.set(cfg, trim(value), where + ": " + key);
            return;
        }
    }
    throw ConfigError(where + ": unknown key '" + key + "'");
}

inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
    std::string section;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string_view line = trim(std::string_view(text).substr(start, end - start));
        start = end + 1;
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) throw ConfigError(where + ": empty section name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
        set_config_value(cfg, section + "." + key, line.substr(eq + 1), where);
    }
}

inline RunConfig load_config(const std::filesystem::path& path) {
    RunConfig cfg;
    std::string text;
    try {
        text = read_text(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    apply_config_text(cfg, text, path.string());
    return cfg;
}

// "section.key=value"
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected section.key=value");
    set_config_value(cfg, std::string(trim(std::string_view(assignment).substr(0, eq))),
                     std::string_view(assignment).substr(eq + 1), "override");
}

// Flat snapshot in key order; feeding it back through apply_config_text
// reproduces the configuration.
inline Json config_snapshot(const RunConfig& cfg) {
    Json j = Json::object();
    for (const auto& [name, k] : detail::config_keys()) j[name] = k.get(cfg);
    return j;
}

inline std::string config_to_text(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& [name, k] : detail::config_keys()) {
        const std::size_t dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
            section = sec;
        }
        out += name.substr(dot + 1) + " = " + k.get(cfg) + "\n";
    }
    return out;
}

}  // namespace clevercatch
