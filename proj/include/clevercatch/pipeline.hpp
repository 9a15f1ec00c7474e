// clevercatch/pipeline.hpp
// File-level commands behind the command-line tool. Each command reads its
// inputs, writes its outputs into the run directory and finishes with a
// manifest (manifest_<command>.json) holding the config snapshot, input and
// output hashes, per-stage timings and notes.
//
// Relative input paths are looked up in the working directory first and then
// in the run directory, so commands chain inside one run directory.
#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "clevercatch/ablation.hpp"
#include "clevercatch/config.hpp"
#include "clevercatch/detector.hpp"
#include "clevercatch/embedding.hpp"
#include "clevercatch/evaluation.hpp"
#include "clevercatch/features.hpp"
#include "clevercatch/ingest.hpp"
#include "clevercatch/io.hpp"
#include "clevercatch/json_io.hpp"
#include "clevercatch/rules.hpp"
#include "clevercatch/simulator.hpp"

namespace clevercatch {

namespace fs = std::filesystem;

inline constexpr const char* kPipelineVersion = "1.0.0";

class Manifest {
public:
    Manifest(std::string command, const RunConfig& cfg) : command_(std::move(command)), config_(config_snapshot(cfg)) {}

    void input(const fs::path& p) { inputs_.emplace_back(p.generic_string(), file_hash(p)); }
    void output(const fs::path& p) { outputs_.emplace_back(p.generic_string(), file_hash(p)); }
    void note(std::string n) { notes_.push_back(std::move(n)); }

    template <class F>
    auto timed(const std::string& stage, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings_.emplace_back(stage, seconds_since(t0));
        } else {
            auto r = f();
            timings_.emplace_back(stage, seconds_since(t0));
            return r;
        }
    }

    Json to_json() const {
        Json j = Json::object();
        j["command"] = command_;
        j["pipeline_version"] = kPipelineVersion;
        Json versions = Json::object();
        versions["encoder_format"] = kEncoderFormatVersion;
        versions["detector_format"] = kDetectorFormatVersion;
        versions["feature_binary_magic"] = std::string(kFeatureMagic, sizeof kFeatureMagic);
        j["module_versions"] = std::move(versions);
        j["config"] = config_;
        j["inputs"] = pairs_json(inputs_);
        j["outputs"] = pairs_json(outputs_);
        Json t = Json::object();
        for (const auto& [stage, s] : timings_) t[stage] = s;
        j["timings_seconds"] = std::move(t);
        j["notes"] = notes_;
        return j;
    }

    fs::path write(const fs::path& dir) const {
        const fs::path p = dir / ("manifest_" + command_ + ".json");
        write_text_atomic(p, dump_json(to_json()));
        return p;
    }

private:
    static double seconds_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    static Json pairs_json(const std::vector<std::pair<std::string, std::string>>& xs) {
        Json j = Json::object();
        for (const auto& [k, v] : xs) j[k] = v;
        return j;
    }

    std::string command_;
    Json config_;
    std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
    std::vector<std::pair<std::string, double>> timings_;
    std::vector<std::string> notes_;
};

inline fs::path out_dir(const RunConfig& cfg) {
    fs::path d(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create output directory " + d.string() + ": " + ec.message());
    return d;
}

inline fs::path resolve_input(const RunConfig& cfg, const std::string& p) {
    const fs::path path(p);
    if (path.is_absolute() || fs::exists(path)) return path;
    const fs::path in_run = fs::path(cfg.out_dir) / path;
    if (fs::exists(in_run)) return in_run;
    throw IoError("input file not found: " + p + " (also looked in " + cfg.out_dir + ")");
}

inline bool input_exists(const RunConfig& cfg, const std::string& p) {
    const fs::path path(p);
    return fs::exists(path) || (!path.is_absolute() && fs::exists(fs::path(cfg.out_dir) / path));
}

inline fs::path emit(Manifest& m, const fs::path& p, std::string_view content) {
    write_text_atomic(p, content);
    m.output(p);
    return p;
}

// ---------------------------------------------------------------------------
// Shared loaders
// ---------------------------------------------------------------------------

struct LoadedRules {
    ClaimsTable claims;
    RuleSet rules;
};

inline LoadedRules load_claims_and_rules(const RunConfig& cfg, Manifest& m) {
    const fs::path claims_path = resolve_input(cfg, cfg.paths.claims);
    const fs::path rules_path = resolve_input(cfg, cfg.paths.rules);
    m.input(claims_path);
    m.input(rules_path);
    LoadedRules out;
    out.claims = parse_claims_csv(claims_path);
    for (const auto& w : out.claims.warnings) m.note(w);
    out.rules = parse_rules(rules_path, out.claims.drugs);
    return out;
}

// Sidecar written next to a feature file so later stages can check bindings.
inline Json features_sidecar(const FeatureMatrix& fm, const RuleSet& rules) {
    Json j = Json::object();
    j["ruleset_fingerprint"] = fingerprint(rules);
    j["mode"] = std::string(to_string(fm.mode));
    j["rows"] = fm.rows();
    j["cols"] = fm.cols();
    return j;
}

inline fs::path sidecar_path(const fs::path& features) {
    fs::path p = features;
    p.replace_extension(".json");
    return p;
}

struct LoadedFeatures {
    FeatureMatrix fm;
    std::string fingerprint;  // empty when no sidecar is present
};

inline LoadedFeatures load_features(const RunConfig& cfg, Manifest& m) {
    const fs::path p = resolve_input(cfg, cfg.paths.features);
    m.input(p);
    LoadedFeatures out;
    out.fm = features_from_csv(read_text(p), p.string());
    const fs::path side = sidecar_path(p);
    if (fs::exists(side)) {
        m.input(side);
        const Json j = parse_json_text(read_text(side), side.string());
        out.fingerprint = json_get<std::string>(j, "ruleset_fingerprint", side.string());
        if (json_get<std::size_t>(j, "cols", side.string()) != out.fm.cols())
            throw ShapeError(p.string() + ": column count differs from its sidecar");
    } else {
        m.note("no feature sidecar at " + side.string() + "; rule-set binding not checked");
    }
    return out;
}

inline void check_feature_binding(const LoadedFeatures& f, const std::string& expected, const std::string& what) {
    if (!f.fingerprint.empty() && f.fingerprint != expected)
        throw FingerprintError("feature fingerprint " + f.fingerprint + " does not match " + what + " fingerprint " +
                               expected);
}

inline EncoderPair load_encoders(const RunConfig& cfg, Manifest& m) {
    const fs::path p = resolve_input(cfg, cfg.paths.encoders);
    m.input(p);
    return encoders_from_json(parse_json_text(read_text(p), p.string()), p.string());
}

inline Detector load_detector(const RunConfig& cfg, Manifest& m) {
    const fs::path p = resolve_input(cfg, cfg.paths.detector);
    m.input(p);
    return detector_from_json(parse_json_text(read_text(p), p.string()), p.string());
}

// Labels aligned to the feature rows (kUnlabeled where absent).
inline std::vector<int> load_label_vector(const RunConfig& cfg, const std::string& path,
                                          const std::vector<std::string>& npis, Manifest& m) {
    const fs::path p = resolve_input(cfg, path);
    m.input(p);
    PrescriberIndex index;
    for (const auto& npi : npis) index.add(npi);
    const LabelTable t = parse_labels(p, index);
    for (const auto& w : t.warnings) m.note(w);
    return label_vector(t, npis.size());
}

inline PretrainConfig pretrain_settings(const RunConfig& cfg) {
    PretrainConfig p = cfg.pretrain;
    p.seed = cfg.stage("pretrain");
    p.triplets.block = feature_width(1, cfg.feature_mode);
    return p;
}

inline DetectorConfig detector_settings(const RunConfig& cfg) {
    DetectorConfig d = cfg.detector;
    d.seed = cfg.stage("train");
    d.alignment = cfg.alignment;
    return d;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline fs::path cmd_simulate(const RunConfig& cfg) {
    Manifest m("simulate", cfg);
    const fs::path dir = out_dir(cfg);
    SimConfig sc = cfg.simulator;
    sc.seed = cfg.stage("simulate");
    const SimDataset ds = m.timed("simulate", [&] { return simulate(sc); });
    emit(m, dir / "claims.csv", serialize_claims(ds.claims));
    emit(m, dir / "labels.csv", sim_labels_csv(ds, LabelSubset::all));
    emit(m, dir / "labels_train.csv", sim_labels_csv(ds, LabelSubset::labeled));
    emit(m, dir / "labels_eval.csv", sim_labels_csv(ds, LabelSubset::unlabeled));
    emit(m, dir / "rules.csv", serialize_rule_specs(ds.rules));
    emit(m, dir / "drug_targets.csv", sim_targets_csv(ds));
    emit(m, dir / "opioids.csv", sim_opioids_csv(ds));
    emit(m, dir / "ground_truth.json", dump_json(sim_ground_truth_json(ds)));
    return m.write(dir);
}

inline fs::path cmd_derive_rules(const RunConfig& cfg) {
    Manifest m("derive-rules", cfg);
    const fs::path dir = out_dir(cfg);
    const fs::path claims_path = resolve_input(cfg, cfg.paths.claims);
    const fs::path targets_path = resolve_input(cfg, cfg.paths.targets);
    m.input(claims_path);
    m.input(targets_path);
    const ClaimsTable claims = parse_claims_csv(claims_path);
    std::vector<std::string> warnings;
    std::vector<RuleSpec> specs =
        derive_cost_preference_rules(parse_drug_targets(targets_path), claims.price_stats(), cfg.gaps, &warnings);
    if (input_exists(cfg, cfg.paths.opioids)) {
        const fs::path op = resolve_input(cfg, cfg.paths.opioids);
        m.input(op);
        for (auto& s : derive_opioid_rules(parse_opioid_annotations(op), cfg.opioid_default_weight)) {
            if (!claims.drugs.find(s.p)) {
                warnings.push_back("opioid " + s.p + " does not occur in the claims; rule dropped");
                continue;
            }
            specs.push_back(std::move(s));
        }
    } else {
        m.note("no opioid annotation file; only cost-preference rules derived");
    }
    for (auto& w : warnings) m.note(std::move(w));
    if (specs.empty()) throw ContractError("derive-rules: no rules could be derived");
    RuleSet::from_specs(specs, claims.drugs);  // validates before writing
    emit(m, dir / "rules.csv", serialize_rule_specs(specs));
    return m.write(dir);
}

inline fs::path cmd_featurize(const RunConfig& cfg) {
    Manifest m("featurize", cfg);
    const fs::path dir = out_dir(cfg);
    const LoadedRules in = load_claims_and_rules(cfg, m);
    const FeatureMatrix fm = m.timed("featurize", [&] { return build_feature_matrix(in.claims, in.rules, cfg.feature_mode); });
    emit(m, dir / "features.csv", features_to_csv(fm));
    emit(m, dir / "features.json", dump_json(features_sidecar(fm, in.rules)));
    return m.write(dir);
}

inline std::string pretrain_history_csv(const PretrainResult& r) {
    std::string out = "epoch,updated,mean_loss,heldout_separation\n";
    out += "-1,none,," + format_double(r.initial_separation) + "\n";
    for (const auto& e : r.history)
        out += std::to_string(e.epoch) + "," + (e.updated_sample_encoder ? "sample" : "rule") + "," +
               format_double(e.mean_loss) + "," + format_double(e.heldout_separation) + "\n";
    return out;
}

inline fs::path cmd_pretrain(const RunConfig& cfg) {
    Manifest m("pretrain", cfg);
    const fs::path dir = out_dir(cfg);
    const LoadedRules in = load_claims_and_rules(cfg, m);
    const PretrainResult r = m.timed("pretrain", [&] { return pretrain(in.rules, pretrain_settings(cfg)); });
    emit(m, dir / "encoders.json", dump_json(encoders_to_json(r.encoders)));
    emit(m, dir / "pretrain_history.csv", pretrain_history_csv(r));
    if (!r.history.empty())
        m.note("final held-out triplet separation " + format_double(r.history.back().heldout_separation));
    return m.write(dir);
}

inline fs::path cmd_pseudolabel(const RunConfig& cfg) {
    Manifest m("pseudolabel", cfg);
    const fs::path dir = out_dir(cfg);
    const LoadedRules in = load_claims_and_rules(cfg, m);
    const LoadedFeatures f = load_features(cfg, m);
    const EncoderPair enc = load_encoders(cfg, m);
    check_feature_binding(f, enc.ruleset_fingerprint, "encoder");
    const PseudoLabelResult r = m.timed("pseudolabel", [&] {
        return pseudo_label_classifier(f.fm.values, enc, in.rules, cfg.alignment, cfg.threshold);
    });
    std::string out = "npi,cost,pseudo_label\n";
    for (std::size_t i = 0; i < f.fm.rows(); ++i)
        out += csv_escape(f.fm.npis[i]) + "," + format_double(r.costs[i]) + "," + format_double(r.pseudo[i]) + "\n";
    emit(m, dir / "pseudo_labels.csv", out);
    if (!r.plan.converged) m.note("sinkhorn did not converge within max_iters");
    std::size_t flagged = 0;
    for (int p : r.predicted) flagged += p;
    m.note("pseudo-label > " + format_double(cfg.threshold) + " for " + std::to_string(flagged) + " of " +
           std::to_string(r.predicted.size()) + " prescribers");
    return m.write(dir);
}

inline std::string train_history_csv(const TrainResult& r) {
    std::string out = "epoch,supervised,alignment,total,mean_pseudo_label,sinkhorn_unconverged\n";
    for (const auto& e : r.history)
        out += std::to_string(e.epoch) + "," + format_double(e.supervised) + "," + format_double(e.alignment) + "," +
               format_double(e.total) + "," + format_double(e.mean_pseudo_label) + "," +
               std::to_string(e.sinkhorn_unconverged) + "\n";
    return out;
}

inline fs::path cmd_train(const RunConfig& cfg) {
    Manifest m("train", cfg);
    const fs::path dir = out_dir(cfg);
    const LoadedRules in = load_claims_and_rules(cfg, m);
    const LoadedFeatures f = load_features(cfg, m);
    const EncoderPair enc = load_encoders(cfg, m);
    check_feature_binding(f, enc.ruleset_fingerprint, "encoder");
    const std::vector<int> labels = load_label_vector(cfg, cfg.paths.labels, f.fm.npis, m);
    m.note("pseudo-labels recomputed per batch in every epoch; calibration updated during training only");
    const TrainResult r =
        m.timed("train", [&] { return hybrid_train(f.fm.values, labels, enc, in.rules, detector_settings(cfg)); });
    emit(m, dir / "detector.json", dump_json(detector_to_json(r.detector)));
    emit(m, dir / "train_history.csv", train_history_csv(r));
    return m.write(dir);
}

inline std::string scores_csv(const std::vector<std::string>& npis, const ScoreReport& rep) {
    std::string out = "npi,score,rank\n";
    for (std::size_t i = 0; i < npis.size(); ++i)
        out += csv_escape(npis[i]) + "," + format_double(rep.scores[i]) + "," + std::to_string(rep.ranks[i]) + "\n";
    return out;
}

inline fs::path cmd_score(const RunConfig& cfg) {
    Manifest m("score", cfg);
    const fs::path dir = out_dir(cfg);
    const Detector det = load_detector(cfg, m);
    const LoadedFeatures f = load_features(cfg, m);
    check_feature_binding(f, det.encoder_fingerprint, "detector");
    const ScoreReport rep = m.timed("score", [&] { return score(det, f.fm.values); });
    emit(m, dir / "scores.csv", scores_csv(f.fm.npis, rep));
    return m.write(dir);
}

struct ScoreTable {
    std::vector<std::string> npis;
    std::vector<double> scores;
};

// External scorer intake: `npi,score` (extra columns ignored).
inline ScoreTable parse_scores(const fs::path& p) {
    const CsvTable t = parse_csv_text(read_text(p), p.string(), {"npi", "score"}, true);
    ScoreTable s;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        s.npis.push_back(t.rows[k][0]);
        s.scores.push_back(parse_double(t.rows[k][1], p.string() + ":" + std::to_string(t.line_numbers[k])));
    }
    return s;
}

inline fs::path cmd_evaluate(const RunConfig& cfg) {
    Manifest m("evaluate", cfg);
    const fs::path dir = out_dir(cfg);
    ScoreTable st;
    if (input_exists(cfg, cfg.paths.scores)) {
        const fs::path p = resolve_input(cfg, cfg.paths.scores);
        m.input(p);
        st = parse_scores(p);
    } else {
        m.note("no scores file; scoring detector on features in process");
        const Detector det = load_detector(cfg, m);
        const LoadedFeatures f = load_features(cfg, m);
        check_feature_binding(f, det.encoder_fingerprint, "detector");
        st.npis = f.fm.npis;
        st.scores = score(det, f.fm.values).scores;
    }
    const std::vector<int> labels = load_label_vector(cfg, cfg.paths.eval_labels, st.npis, m);
    const EvalReport rep = evaluate_labeled(st.scores, labels, cfg.k_list, cfg.threshold, "detector", cfg.seed);
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] != kUnlabeled) s.push_back(st.scores[i]), y.push_back(labels[i]);
    emit(m, dir / "report.csv", reports_to_csv({rep}, cfg.k_list));
    emit(m, dir / "pr_curve.csv", pr_curve_to_csv(pr_curve(s, y)));
    m.note("evaluated " + std::to_string(s.size()) + " prescribers with labels");
    return m.write(dir);
}

inline fs::path cmd_ablate(const RunConfig& cfg) {
    Manifest m("ablate", cfg);
    const fs::path dir = out_dir(cfg);
    LoadedRules in = load_claims_and_rules(cfg, m);
    DatasetBundle data;
    data.train_labels = load_label_vector(cfg, cfg.paths.labels, in.claims.prescribers.npis(), m);
    data.eval_labels = load_label_vector(cfg, cfg.paths.eval_labels, in.claims.prescribers.npis(), m);
    data.claims = std::move(in.claims);
    data.rules = std::move(in.rules);
    AblationConfig ac;
    ac.pretrain = cfg.pretrain;
    ac.detector = cfg.detector;
    ac.detector.alignment = cfg.alignment;
    ac.mode = cfg.feature_mode;
    ac.ks = cfg.k_list;
    ac.threshold = cfg.threshold;
    ac.groups = cfg.ablation_groups;
    ac.seeds = cfg.ablation_seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.ablation_seeds;
    const AblationReport rep = m.timed("ablate", [&] { return ablation_run(data, ac); });
    emit(m, dir / "ablation.csv", reports_to_csv(rep.rows, cfg.k_list));
    emit(m, dir / "ablation_delta.csv", reports_to_csv(rep.deltas, cfg.k_list));
    for (const auto& n : rep.notes) m.note(n);
    return m.write(dir);
}

}  // namespace clevercatch
