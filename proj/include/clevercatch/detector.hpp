// clevercatch/detector.hpp
// Base anomaly detector f: features -> (0,1) trained on
//
//   L_total = (1/|L|) sum_{i in L} BCE(f(x_i), y_i) + lambda * (1/B) sum_{i in B} BCE(f(x_i), yhat_i)
//
// where the pseudo-labels yhat come from transport alignment of the batch
// against the encoded rules. Supervised normalisation counts only the labeled
// members of the batch.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "clevercatch/alignment.hpp"
#include "clevercatch/embedding.hpp"
#include "clevercatch/error.hpp"
#include "clevercatch/json_io.hpp"
#include "clevercatch/matrix.hpp"
#include "clevercatch/mlp.hpp"
#include "clevercatch/optimizer.hpp"
#include "clevercatch/rng.hpp"
#include "clevercatch/rules.hpp"

namespace clevercatch {

inline constexpr double kScoreClamp = 1e-7;
inline constexpr int kUnlabeled = -1;

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d score
};

// Mean BCE of `scores` against (possibly soft) `targets` over the entries
// where mask is true (all entries when mask is empty). Scores are clamped to
// [1e-7, 1-1e-7]; the gradient is zero where the clamp is active.
inline LossAndGrad masked_bce(std::span<const double> scores, std::span<const double> targets,
                              std::span<const unsigned char> mask = {}) {
    if (scores.size() != targets.size()) throw ShapeError("bce: scores and targets differ in length");
    if (!mask.empty() && mask.size() != scores.size()) throw ShapeError("bce: mask length mismatch");
    LossAndGrad out;
    out.grad.assign(scores.size(), 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) n += mask.empty() || mask[i];
    if (n == 0) return out;
    const double inv = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        const double s = scores[i];
        const double c = std::clamp(s, kScoreClamp, 1.0 - kScoreClamp);
        const double y = targets[i];
        total += -(y * std::log(c) + (1.0 - y) * std::log(1.0 - c));
        if (s > kScoreClamp && s < 1.0 - kScoreClamp) out.grad[i] = inv * (c - y) / (c * (1.0 - c));
    }
    out.loss = total * inv;
    return out;
}

inline LossAndGrad supervised_loss(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("supervised_loss: length mismatch");
    std::vector<double> targets(labels.size());
    std::vector<unsigned char> mask(labels.size());
    std::size_t n = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1 && labels[i] != kUnlabeled)
            throw ContractError("supervised_loss: labels must be 0, 1 or unlabeled");
        targets[i] = labels[i] == 1 ? 1.0 : 0.0;
        mask[i] = labels[i] != kUnlabeled;
        n += mask[i];
    }
    if (n == 0) throw ContractError("supervised_loss: no labeled samples");
    return masked_bce(scores, targets, mask);
}

inline LossAndGrad alignment_loss(std::span<const double> scores, std::span<const double> pseudo) {
    for (double y : pseudo)
        if (!(y >= 0.0 && y <= 1.0)) throw ContractError("alignment_loss: pseudo-labels must lie in [0,1]");
    return masked_bce(scores, pseudo);
}

// ---------------------------------------------------------------------------

struct DetectorConfig {
    std::vector<std::size_t> hidden{64, 32};
    double lambda = 0.5;
    std::size_t epochs = 30;
    std::size_t batch = 256;
    OptimizerSettings optimizer{};
    std::uint64_t seed = 0;
    AlignmentSettings alignment{};
};

struct Detector {
    Mlp mlp;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::string encoder_fingerprint;

    std::size_t input_width() const { return mlp.in_width(); }
};

struct TrainEpoch {
    std::size_t epoch = 0;
    double supervised = 0.0;       // over all labeled samples, after the epoch
    double alignment = 0.0;        // mean batch alignment loss during the epoch
    double total = 0.0;            // mean batch objective during the epoch
    double mean_pseudo_label = 0.0;
    std::size_t sinkhorn_unconverged = 0;
};

struct TrainResult {
    Detector detector;
    std::vector<TrainEpoch> history;
    CalibrationState calibration;
};

inline void check_labels(std::span<const int> labels, std::size_t rows) {
    if (labels.size() != rows) throw ShapeError("labels: one entry per feature row is required");
    std::size_t n = 0;
    for (int y : labels) {
        if (y != 0 && y != 1 && y != kUnlabeled) throw ContractError("labels must be 0, 1 or unlabeled");
        n += y != kUnlabeled;
    }
    if (n == 0) throw ContractError("training needs at least one labeled sample");
}

inline Detector init_detector(std::size_t width, const DetectorConfig& cfg, Rng& rng) {
    std::vector<std::size_t> widths{width};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(1);
    Detector det;
    det.mlp = Mlp::init(widths, Activation::relu, Activation::sigmoid, rng);
    det.lambda = cfg.lambda;
    det.seed = cfg.seed;
    return det;
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < n; s += batch)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch)));
    return out;
}

inline std::vector<double> column0(const Matrix& m) {
    std::vector<double> v(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, 0);
    return v;
}

inline void detector_step(Detector& det, Optimizer& opt, const MlpCache& cache, std::span<const double> score_grad) {
    Matrix g(score_grad.size(), 1, std::vector<double>(score_grad.begin(), score_grad.end()));
    const MlpBackward bw = mlp_backward(det.mlp, cache, g);
    std::vector<ParamSlot> slots;
    append_mlp_slots(slots, det.mlp, bw.grads, "detector");
    opt.step(slots);
    ++det.mlp.revision;
}

inline double labeled_loss(const Detector& det, const Matrix& x, std::span<const int> labels) {
    const auto scores = column0(mlp_apply(det.mlp, x));
    return supervised_loss(scores, labels).loss;
}

// Supervised-only trainer sharing the hybrid trainer's initialisation and batch schedule.
inline TrainResult train_supervised(const Matrix& features, std::span<const int> labels, const DetectorConfig& cfg) {
    check_labels(labels, features.rows());
    if (cfg.batch == 0) throw ConfigError("train: batch must be >= 1");
    Rng init_rng(stage_seed(cfg.seed, "detector-init"));
    Rng batch_rng(stage_seed(cfg.seed, "detector-batches"));
    TrainResult result;
    result.detector = init_detector(features.cols(), cfg, init_rng);
    Optimizer opt(cfg.optimizer);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        TrainEpoch rec;
        rec.epoch = epoch;
        const auto batches = epoch_batches(features.rows(), cfg.batch, batch_rng);
        for (const auto& idx : batches) {
            std::vector<int> y(idx.size());
            bool any = false;
            for (std::size_t k = 0; k < idx.size(); ++k) any |= (y[k] = labels[idx[k]]) != kUnlabeled;
            const MlpForward fw = mlp_forward(result.detector.mlp, gather_rows(features, idx));
            const auto scores = column0(fw.output);
            std::vector<double> grad(idx.size(), 0.0);
            if (any) {
                const LossAndGrad sup = supervised_loss(scores, y);
                grad = sup.grad;
                rec.total += sup.loss / static_cast<double>(batches.size());
            }
            detector_step(result.detector, opt, fw.cache, grad);
        }
        rec.supervised = labeled_loss(result.detector, features, labels);
        result.history.push_back(rec);
    }
    return result;
}

inline void check_binding(const EncoderPair& enc, const RuleSet& rules, std::size_t feature_width) {
    const std::string fp = fingerprint(rules);
    if (fp != enc.ruleset_fingerprint)
        throw FingerprintError("encoder fingerprint " + enc.ruleset_fingerprint + " does not match rule set fingerprint " +
                               fp);
    if (enc.sample.in_width() != feature_width)
        throw ShapeError("feature width " + std::to_string(feature_width) + " does not match sample encoder input " +
                         std::to_string(enc.sample.in_width()));
}

inline TrainResult hybrid_train(const Matrix& features, std::span<const int> labels, const EncoderPair& enc,
                                const RuleSet& rules, const DetectorConfig& cfg) {
    check_labels(labels, features.rows());
    check_binding(enc, rules, features.cols());
    if (cfg.batch == 0) throw ConfigError("train: batch must be >= 1");
    if (!(cfg.lambda >= 0.0)) throw ConfigError("train: lambda must be >= 0");

    Rng init_rng(stage_seed(cfg.seed, "detector-init"));
    Rng batch_rng(stage_seed(cfg.seed, "detector-batches"));
    TrainResult result;
    result.detector = init_detector(features.cols(), cfg, init_rng);
    result.detector.encoder_fingerprint = enc.ruleset_fingerprint;
    result.calibration.momentum = cfg.alignment.momentum;

    const Matrix rule_emb = rule_embeddings(enc.rule, rules);
    const Matrix sample_emb = sample_encode(enc.sample, features);
    const std::vector<double> weights = rules.weights();
    Optimizer opt(cfg.optimizer);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        TrainEpoch rec;
        rec.epoch = epoch;
        const auto batches = epoch_batches(features.rows(), cfg.batch, batch_rng);
        double pseudo_sum = 0.0;
        for (const auto& idx : batches) {
            const BatchAlignment al = align_batch(gather_rows(sample_emb, idx), rule_emb, weights, cfg.alignment);
            rec.sinkhorn_unconverged += !al.plan.converged;
            result.calibration = update_calibration(result.calibration, al.sample_cost);
            const auto pseudo = pseudo_labels(al.sample_cost, result.calibration, cfg.alignment.tau,
                                              cfg.alignment.epsilon);
            for (double y : pseudo) pseudo_sum += y;

            std::vector<int> y(idx.size());
            bool any = false;
            for (std::size_t k = 0; k < idx.size(); ++k) any |= (y[k] = labels[idx[k]]) != kUnlabeled;
            const MlpForward fw = mlp_forward(result.detector.mlp, gather_rows(features, idx));
            const auto scores = column0(fw.output);

            const LossAndGrad align = alignment_loss(scores, pseudo);
            std::vector<double> grad(idx.size(), 0.0);
            double batch_total = cfg.lambda * align.loss;
            if (any) {
                const LossAndGrad sup = supervised_loss(scores, y);
                grad = sup.grad;
                batch_total += sup.loss;
            }
            for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += cfg.lambda * align.grad[k];
            if (!std::isfinite(batch_total))
                throw NumericError("train: non-finite objective at epoch " + std::to_string(epoch));
            rec.alignment += align.loss / static_cast<double>(batches.size());
            rec.total += batch_total / static_cast<double>(batches.size());
            detector_step(result.detector, opt, fw.cache, grad);
        }
        rec.supervised = labeled_loss(result.detector, features, labels);
        rec.mean_pseudo_label = pseudo_sum / static_cast<double>(features.rows());
        result.history.push_back(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct ScoreReport {
    std::vector<double> scores;
    std::vector<std::size_t> ranks;  // 1-based rank of row i
    std::vector<std::size_t> order;  // rows sorted by descending score, index tie-break
};

// Descending score order, ties broken by ascending index.
inline std::vector<std::size_t> rank_order(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

inline ScoreReport make_score_report(std::vector<double> scores) {
    ScoreReport rep;
    rep.scores = std::move(scores);
    rep.order = rank_order(rep.scores);
    rep.ranks.assign(rep.scores.size(), 0);
    for (std::size_t k = 0; k < rep.order.size(); ++k) rep.ranks[rep.order[k]] = k + 1;
    return rep;
}

inline ScoreReport score(const Detector& det, const Matrix& features) {
    if (features.cols() != det.input_width())
        throw ShapeError("score: feature width " + std::to_string(features.cols()) + " != detector input " +
                         std::to_string(det.input_width()));
    return make_score_report(column0(mlp_apply(det.mlp, features)));
}

struct PseudoLabelResult {
    std::vector<double> costs;
    std::vector<double> pseudo;
    std::vector<int> predicted;
    CalibrationState calibration;
    TransportPlan plan;
};

// One alignment pass over the whole dataset; calibration is the dataset's own
// mean/stdev of transport cost. Prediction is pseudo-label > threshold.
inline PseudoLabelResult pseudo_label_classifier(const Matrix& features, const EncoderPair& enc, const RuleSet& rules,
                                                 const AlignmentSettings& settings, double threshold = 0.5) {
    check_binding(enc, rules, features.cols());
    PseudoLabelResult out;
    const Matrix rule_emb = rule_embeddings(enc.rule, rules);
    const Matrix sample_emb = sample_encode(enc.sample, features);
    BatchAlignment al = align_batch(sample_emb, rule_emb, rules.weights(), settings);
    out.costs = std::move(al.sample_cost);
    out.plan = std::move(al.plan);
    out.calibration.momentum = settings.momentum;
    out.calibration = update_calibration(out.calibration, out.costs);
    out.pseudo = pseudo_labels(out.costs, out.calibration, settings.tau, settings.epsilon);
    out.predicted.resize(out.pseudo.size());
    for (std::size_t i = 0; i < out.pseudo.size(); ++i) out.predicted[i] = out.pseudo[i] > threshold ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr int kDetectorFormatVersion = 1;

inline Json detector_to_json(const Detector& det) {
    Json j = Json::object();
    j["format_version"] = kDetectorFormatVersion;
    j["input_width"] = det.input_width();
    Json arch = Json::object();
    std::vector<std::size_t> hidden;
    for (std::size_t l = 0; l + 1 < det.mlp.layers.size(); ++l) hidden.push_back(det.mlp.layers[l].fan_out());
    arch["hidden"] = hidden;
    arch["hidden_activation"] = "relu";
    arch["output_activation"] = "sigmoid";
    j["architecture"] = std::move(arch);
    j["weights"] = to_json(det.mlp);
    j["lambda"] = det.lambda;
    j["seed"] = det.seed;
    j["encoder_fingerprint"] = det.encoder_fingerprint;
    return j;
}

inline Detector detector_from_json(const Json& j, const std::string& source = "detector") {
    const int version = json_get<int>(j, "format_version", source);
    if (version != kDetectorFormatVersion)
        throw ParseError(source + ": unsupported detector format_version " + std::to_string(version));
    Detector det;
    const auto width = json_get<std::size_t>(j, "input_width", source);
    if (!j.contains("weights")) throw ParseError(source + ": missing weights");
    det.mlp = mlp_from_json(j["weights"], source + ".weights");
    if (det.mlp.in_width() != width || det.mlp.out_width() != 1)
        throw ParseError(source + ": weights do not match input_width");
    det.lambda = json_get<double>(j, "lambda", source);
    det.seed = json_get<std::uint64_t>(j, "seed", source);
    det.encoder_fingerprint = json_get<std::string>(j, "encoder_fingerprint", source);
    return det;
}

}  // namespace clevercatch
