// clevercatch/ablation.hpp
// End-to-end runs over rule subsets: full, minus one rule group, and lambda = 0.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clevercatch/detector.hpp"
#include "clevercatch/embedding.hpp"
#include "clevercatch/evaluation.hpp"
#include "clevercatch/features.hpp"
#include "clevercatch/ingest.hpp"
#include "clevercatch/rng.hpp"
#include "clevercatch/rules.hpp"

namespace clevercatch {

// Claims, rules and two label views over the same prescribers: labels visible
// to training, and labels used for evaluation (kUnlabeled where absent).
struct DatasetBundle {
    ClaimsTable claims;
    RuleSet rules;
    std::vector<int> train_labels;
    std::vector<int> eval_labels;
};

inline std::vector<int> label_vector(const LabelTable& t, std::size_t n) {
    std::vector<int> out(n, kUnlabeled);
    for (const auto& [i, y] : t.labels) out.at(i) = y;
    return out;
}

// Metrics over the rows that carry an evaluation label.
inline EvalReport evaluate_labeled(std::span<const double> scores, std::span<const int> labels,
                                   const std::vector<std::size_t>& ks, double threshold, std::string config = "",
                                   std::uint64_t seed = 0) {
    if (scores.size() != labels.size()) throw ShapeError("evaluate: scores and labels differ in length");
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == kUnlabeled) continue;
        s.push_back(scores[i]);
        y.push_back(labels[i]);
    }
    return evaluate(s, y, ks, threshold, std::move(config), seed);
}

inline RuleKind group_kind(const std::string& group) {
    if (group == "cost_preference") return RuleKind::binary;
    if (group == "opioid") return RuleKind::unary;
    throw ConfigError("unknown ablation group '" + group + "'");
}

struct ModelRun {
    FeatureMatrix features;
    EncoderPair encoders;
    TrainResult trained;
    ScoreReport scores;
};

// Featurize, pretrain, train and score with one rule set. Seeds for the
// stages are derived from `seed`.
inline ModelRun run_model(const ClaimsTable& claims, const RuleSet& rules, std::span<const int> train_labels,
                          FeatureMode mode, PretrainConfig pcfg, DetectorConfig dcfg, std::uint64_t seed) {
    ModelRun run;
    run.features = build_feature_matrix(claims, rules, mode);
    pcfg.seed = stage_seed(seed, "pretrain");
    pcfg.triplets.block = feature_width(1, mode);
    run.encoders = pretrain(rules, pcfg).encoders;
    dcfg.seed = stage_seed(seed, "train");
    run.trained = hybrid_train(run.features.values, train_labels, run.encoders, rules, dcfg);
    run.scores = score(run.trained.detector, run.features.values);
    return run;
}

struct AblationConfig {
    PretrainConfig pretrain;
    DetectorConfig detector;
    FeatureMode mode = FeatureMode::full;
    std::vector<std::size_t> ks = default_k_list();
    double threshold = 0.5;
    std::vector<std::string> groups{"cost_preference", "opioid"};
    std::vector<std::uint64_t> seeds{0};
};

struct AblationReport {
    std::vector<EvalReport> rows;    // one per configuration per seed
    std::vector<EvalReport> deltas;  // configuration minus full, same seed
    std::vector<std::string> notes;
};

inline AblationReport ablation_run(const DatasetBundle& data, const AblationConfig& cfg) {
    const std::size_t n = data.claims.prescribers.size();
    if (data.train_labels.size() != n || data.eval_labels.size() != n)
        throw ShapeError("ablation: label vectors must cover every prescriber");
    AblationReport report;
    auto delta = [](const EvalReport& a, const EvalReport& full) {
        EvalReport d = a;
        d.pr_auc = a.pr_auc - full.pr_auc;
        for (std::size_t k = 0; k < d.recall_at.size(); ++k) d.recall_at[k] = a.recall_at[k] - full.recall_at[k];
        d.prf.precision = a.prf.precision - full.prf.precision;
        d.prf.recall = a.prf.recall - full.prf.recall;
        d.prf.f1 = a.prf.f1 - full.prf.f1;
        return d;
    };
    for (std::uint64_t seed : cfg.seeds) {
        const ModelRun full = run_model(data.claims, data.rules, data.train_labels, cfg.mode, cfg.pretrain,
                                        cfg.detector, seed);
        const EvalReport full_rep =
            evaluate_labeled(full.scores.scores, data.eval_labels, cfg.ks, cfg.threshold, "full", seed);
        report.rows.push_back(full_rep);

        for (const auto& group : cfg.groups) {
            const RuleKind kind = group_kind(group);
            const std::string name = "minus_" + group;
            if (data.rules.count(kind) == data.rules.size()) {
                report.notes.push_back(name + " skipped for seed " + std::to_string(seed) + ": no rules remain");
                continue;
            }
            if (data.rules.count(kind) == 0)
                report.notes.push_back(name + ": rule set has no " + group + " rules; identical to full");
            const RuleSet subset = data.rules.without(kind);
            const ModelRun run =
                run_model(data.claims, subset, data.train_labels, cfg.mode, cfg.pretrain, cfg.detector, seed);
            const EvalReport rep = evaluate_labeled(run.scores.scores, data.eval_labels, cfg.ks, cfg.threshold, name, seed);
            report.rows.push_back(rep);
            report.deltas.push_back(delta(rep, full_rep));
        }

        // Removing every rule leaves no alignment signal; that is the lambda = 0 run.
        DetectorConfig d0 = cfg.detector;
        d0.lambda = 0.0;
        d0.seed = stage_seed(seed, "train");
        const TrainResult t0 = hybrid_train(full.features.values, data.train_labels, full.encoders, data.rules, d0);
        const ScoreReport s0 = score(t0.detector, full.features.values);
        const EvalReport rep0 = evaluate_labeled(s0.scores, data.eval_labels, cfg.ks, cfg.threshold, "lambda0", seed);
        report.rows.push_back(rep0);
        report.deltas.push_back(delta(rep0, full_rep));
    }
    return report;
}

}  // namespace clevercatch
