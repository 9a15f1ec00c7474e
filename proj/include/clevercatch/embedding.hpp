// clevercatch/embedding.hpp
// Rule Encoder / Sample Encoder, synthetic satisfy/violate triplets, the
// weighted triplet loss and the alternating pretraining loop.
//
// Rule Encoder:   rho(p, q)    = MLP([E_p ; E_q])       binary
//                 rho(p, NULL) = MLP([E_p ; e_null])    unary
// Sample Encoder: phi(delta)   = MLP(delta),  delta in R^{15R}
// Both map into the same R^L.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/json_io.hpp"
#include "clevercatch/matrix.hpp"
#include "clevercatch/mlp.hpp"
#include "clevercatch/optimizer.hpp"
#include "clevercatch/rng.hpp"
#include "clevercatch/rules.hpp"

namespace clevercatch {

struct RuleEncoder {
    Matrix embedding;                 // D x d, one row per drug
    std::vector<double> null_vector;  // d
    Mlp mlp;                          // 2d -> ... -> L

    std::size_t vocab_size() const noexcept { return embedding.rows(); }
    std::size_t dim() const noexcept { return embedding.cols(); }
    std::size_t latent() const { return mlp.out_width(); }

    bool same_parameters(const RuleEncoder& o) const {
        return embedding == o.embedding && null_vector == o.null_vector && mlp.same_parameters(o.mlp);
    }
};

struct RuleEncoderGrads {
    Matrix embedding;
    std::vector<double> null_vector;
    MlpGrads mlp;
};

struct SampleEncoder {
    Mlp mlp;  // 15R -> ... -> L

    std::size_t in_width() const { return mlp.in_width(); }
    std::size_t latent() const { return mlp.out_width(); }
};

// Concatenated index embeddings [E_p ; E_q or e_null], one row per rule.
inline Matrix rule_encoder_inputs(const RuleEncoder& re, std::span<const Rule> rules) {
    const std::size_t d = re.dim();
    Matrix in(rules.size(), 2 * d);
    for (std::size_t j = 0; j < rules.size(); ++j) {
        const Rule& r = rules[j];
        if (r.p >= re.vocab_size() || (r.q && *r.q >= re.vocab_size()))
            throw ContractError("rule_encode: drug index out of vocabulary (D=" + std::to_string(re.vocab_size()) + ")");
        auto row = in.row(j);
        const auto ep = re.embedding.row(r.p);
        std::copy(ep.begin(), ep.end(), row.begin());
        if (r.q) {
            const auto eq = re.embedding.row(*r.q);
            std::copy(eq.begin(), eq.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
        } else {
            std::copy(re.null_vector.begin(), re.null_vector.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
        }
    }
    return in;
}

inline MlpForward rule_encode_batch(const RuleEncoder& re, std::span<const Rule> rules) {
    return mlp_forward(re.mlp, rule_encoder_inputs(re, rules));
}

inline Matrix rule_embeddings(const RuleEncoder& re, const RuleSet& rules) {
    return rule_encode_batch(re, rules.rules()).output;
}

inline std::vector<double> rule_encode(const RuleEncoder& re, const Rule& rule) {
    const Matrix out = rule_encode_batch(re, std::span<const Rule>(&rule, 1)).output;
    return {out.values().begin(), out.values().end()};
}

inline RuleEncoderGrads rule_encode_backward(const RuleEncoder& re, std::span<const Rule> rules,
                                             const MlpCache& cache, const Matrix& output_grad) {
    MlpBackward bw = mlp_backward(re.mlp, cache, output_grad);
    RuleEncoderGrads g;
    g.mlp = std::move(bw.grads);
    g.embedding = Matrix(re.vocab_size(), re.dim());
    g.null_vector.assign(re.dim(), 0.0);
    const std::size_t d = re.dim();
    for (std::size_t j = 0; j < rules.size(); ++j) {
        const auto gin = bw.input_grad.row(j);
        auto gp = g.embedding.row(rules[j].p);
        for (std::size_t k = 0; k < d; ++k) gp[k] += gin[k];
        if (rules[j].q) {
            auto gq = g.embedding.row(*rules[j].q);
            for (std::size_t k = 0; k < d; ++k) gq[k] += gin[d + k];
        } else {
            for (std::size_t k = 0; k < d; ++k) g.null_vector[k] += gin[d + k];
        }
    }
    return g;
}

inline Matrix sample_encode(const SampleEncoder& se, const Matrix& deltas) {
    if (deltas.cols() != se.in_width())
        throw ShapeError("sample_encode: input width " + std::to_string(deltas.cols()) + " != " +
                         std::to_string(se.in_width()));
    return mlp_apply(se.mlp, deltas);
}

inline std::vector<double> sample_encode(const SampleEncoder& se, std::span<const double> delta) {
    Matrix in(1, delta.size(), std::vector<double>(delta.begin(), delta.end()));
    const Matrix out = sample_encode(se, in);
    return {out.values().begin(), out.values().end()};
}

// ---------------------------------------------------------------------------
// Synthetic triplets
// ---------------------------------------------------------------------------

// Structure-of-arrays triplet store: triplet k is (rule[k], positive.row(k), negative.row(k)).
struct TripletSet {
    std::vector<std::size_t> rule;
    Matrix positive;
    Matrix negative;

    std::size_t size() const noexcept { return rule.size(); }
};

struct TripletConfig {
    std::size_t count = 20000;
    double sigma = 0.1;
    double lo = 0.5;
    double hi = 1.0;
    double weight_floor = 0.05;
    std::size_t block = 15;  // coordinates per rule in the sample vector
};

inline TripletSet gen_synthetic_triplets(const RuleSet& rules, const TripletConfig& cfg, Rng& rng) {
    const std::size_t R = rules.size();
    if (R == 0) throw ContractError("gen_synthetic_triplets: empty rule set");
    if (cfg.count < R) throw ConfigError("gen_synthetic_triplets: count must be >= number of rules");
    if (!(cfg.lo > 0.0 && cfg.lo < cfg.hi && cfg.hi <= 1.0))
        throw ConfigError("gen_synthetic_triplets: band must satisfy 0 < lo < hi <= 1");
    if (!(cfg.sigma >= 0.0)) throw ConfigError("gen_synthetic_triplets: sigma must be >= 0");
    if (cfg.block == 0) throw ConfigError("gen_synthetic_triplets: block must be >= 1");

    std::vector<double> draw_weights;
    for (const auto& r : rules.rules()) draw_weights.push_back(std::max(r.weight, cfg.weight_floor));

    const std::size_t width = cfg.block * R;
    TripletSet ts;
    ts.rule.resize(cfg.count);
    ts.positive = Matrix(cfg.count, width);
    ts.negative = Matrix(cfg.count, width);
    auto background = [&](std::span<double> row) {
        if (cfg.sigma == 0.0) return;
        for (double& x : row) x = std::clamp(cfg.sigma * rng.normal(), -1.0, 1.0);
    };
    for (std::size_t k = 0; k < cfg.count; ++k) {
        const std::size_t j = rng.categorical(draw_weights);
        ts.rule[k] = j;
        auto pos = ts.positive.row(k);
        auto neg = ts.negative.row(k);
        background(pos);
        background(neg);
        for (std::size_t c = 0; c < cfg.block; ++c) pos[cfg.block * j + c] = rng.uniform(cfg.lo, cfg.hi);
        for (std::size_t c = 0; c < cfg.block; ++c) neg[cfg.block * j + c] = -rng.uniform(cfg.lo, cfg.hi);
    }
    return ts;
}

// ---------------------------------------------------------------------------
// Weighted triplet loss
// ---------------------------------------------------------------------------

// w * max(0, |e+ - e_r|^2 - |e- - e_r|^2 + margin)
inline double triplet_loss(std::span<const double> rule_embedding, std::span<const double> positive,
                           std::span<const double> negative, double weight, double margin) {
    if (rule_embedding.size() != positive.size() || rule_embedding.size() != negative.size())
        throw ShapeError("triplet_loss: embedding lengths differ");
    const double dp = squared_distance(positive, rule_embedding);
    const double dn = squared_distance(negative, rule_embedding);
    return weight * std::max(0.0, dp - dn + margin);
}

struct TripletBatchLoss {
    double loss = 0.0;   // mean over the batch
    Matrix rule_grad;    // R x L
    Matrix positive_grad;  // B x L
    Matrix negative_grad;  // B x L
};

// Mean weighted triplet loss over a batch and its gradients with respect to
// every rule embedding and every positive/negative sample embedding.
inline TripletBatchLoss triplet_batch_loss(const Matrix& rule_emb, std::span<const std::size_t> rule_of,
                                           const Matrix& pos_emb, const Matrix& neg_emb,
                                           std::span<const double> rule_weights, double margin) {
    const std::size_t B = rule_of.size();
    const std::size_t L = rule_emb.cols();
    if (pos_emb.rows() != B || neg_emb.rows() != B || pos_emb.cols() != L || neg_emb.cols() != L)
        throw ShapeError("triplet_batch_loss: embedding shapes disagree");
    if (rule_weights.size() != rule_emb.rows()) throw ShapeError("triplet_batch_loss: weight count != rules");
    TripletBatchLoss out;
    out.rule_grad = Matrix(rule_emb.rows(), L);
    out.positive_grad = Matrix(B, L);
    out.negative_grad = Matrix(B, L);
    if (B == 0) return out;
    const double scale = 1.0 / static_cast<double>(B);
    double total = 0.0;
    for (std::size_t k = 0; k < B; ++k) {
        const std::size_t j = rule_of[k];
        if (j >= rule_emb.rows()) throw ShapeError("triplet_batch_loss: rule index out of range");
        const auto er = rule_emb.row(j);
        const auto ep = pos_emb.row(k);
        const auto en = neg_emb.row(k);
        const double w = rule_weights[j];
        const double hinge = squared_distance(ep, er) - squared_distance(en, er) + margin;
        if (hinge <= 0.0) continue;
        total += w * hinge;
        const double c = 2.0 * w * scale;
        auto gr = out.rule_grad.row(j);
        auto gp = out.positive_grad.row(k);
        auto gn = out.negative_grad.row(k);
        for (std::size_t l = 0; l < L; ++l) {
            gp[l] = c * (ep[l] - er[l]);
            gn[l] = -c * (en[l] - er[l]);
            gr[l] += c * (en[l] - ep[l]);
        }
    }
    out.loss = total * scale;
    return out;
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

struct PretrainConfig {
    std::size_t latent = 32;  // L
    std::size_t dim = 16;     // d
    std::vector<std::size_t> rule_hidden{64};
    std::vector<std::size_t> sample_hidden{128, 64};
    double margin = 1.0;
    std::size_t epochs = 50;
    std::size_t batch = 256;
    double holdout = 0.1;
    TripletConfig triplets{};
    OptimizerSettings optimizer{};
    std::uint64_t seed = 0;
};

struct PretrainEpoch {
    std::size_t epoch = 0;
    bool updated_sample_encoder = false;
    double mean_loss = 0.0;
    double heldout_separation = 0.0;
};

struct EncoderPair {
    RuleEncoder rule;
    SampleEncoder sample;
    std::string ruleset_fingerprint;
};

struct PretrainResult {
    EncoderPair encoders;
    double initial_separation = 0.0;
    std::vector<PretrainEpoch> history;
};

inline EncoderPair init_encoders(const RuleSet& rules, const PretrainConfig& cfg, Rng& rng) {
    if (cfg.latent == 0 || cfg.dim == 0) throw ConfigError("pretrain: L and d must be positive");
    EncoderPair enc;
    enc.ruleset_fingerprint = fingerprint(rules);
    const std::size_t D = rules.vocabulary().size();
    enc.rule.embedding = Matrix(D, cfg.dim);
    for (double& x : enc.rule.embedding.values()) x = rng.uniform(-1.0, 1.0);
    enc.rule.null_vector.resize(cfg.dim);
    for (double& x : enc.rule.null_vector) x = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> rw{2 * cfg.dim};
    rw.insert(rw.end(), cfg.rule_hidden.begin(), cfg.rule_hidden.end());
    rw.push_back(cfg.latent);
    enc.rule.mlp = Mlp::init(rw, Activation::relu, Activation::identity, rng);
    std::vector<std::size_t> sw{cfg.triplets.block * rules.size()};
    sw.insert(sw.end(), cfg.sample_hidden.begin(), cfg.sample_hidden.end());
    sw.push_back(cfg.latent);
    enc.sample.mlp = Mlp::init(sw, Activation::relu, Activation::identity, rng);
    return enc;
}

// Fraction of triplets whose positive embeds strictly closer to its rule than the negative.
inline double triplet_separation(const EncoderPair& enc, const RuleSet& rules, const TripletSet& ts) {
    if (ts.size() == 0) return 0.0;
    const Matrix re = rule_embeddings(enc.rule, rules);
    const Matrix pe = sample_encode(enc.sample, ts.positive);
    const Matrix ne = sample_encode(enc.sample, ts.negative);
    std::size_t good = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const auto er = re.row(ts.rule[k]);
        if (squared_distance(pe.row(k), er) < squared_distance(ne.row(k), er)) ++good;
    }
    return static_cast<double>(good) / static_cast<double>(ts.size());
}

inline TripletSet take_triplets(const TripletSet& ts, std::span<const std::size_t> idx) {
    TripletSet out;
    out.rule.reserve(idx.size());
    for (std::size_t k : idx) out.rule.push_back(ts.rule.at(k));
    out.positive = gather_rows(ts.positive, idx);
    out.negative = gather_rows(ts.negative, idx);
    return out;
}

// Alternating optimisation: even epochs update the Sample Encoder with the
// Rule Encoder frozen, odd epochs the reverse. Triplets are generated once.
inline PretrainResult pretrain(const RuleSet& rules, const PretrainConfig& cfg) {
    if (cfg.batch == 0) throw ConfigError("pretrain: batch must be >= 1");
    if (!(cfg.holdout >= 0.0 && cfg.holdout < 1.0)) throw ConfigError("pretrain: holdout must lie in [0,1)");
    if (!(cfg.margin >= 0.0)) throw ConfigError("pretrain: margin must be >= 0");

    Rng init_rng(stage_seed(cfg.seed, "encoder-init"));
    Rng data_rng(stage_seed(cfg.seed, "triplets"));
    Rng batch_rng(stage_seed(cfg.seed, "triplet-batches"));

    PretrainResult result;
    result.encoders = init_encoders(rules, cfg, init_rng);
    EncoderPair& enc = result.encoders;

    const TripletSet all = gen_synthetic_triplets(rules, cfg.triplets, data_rng);
    const std::size_t n_hold = static_cast<std::size_t>(std::floor(cfg.holdout * static_cast<double>(all.size())));
    const std::size_t n_train = all.size() - n_hold;
    std::vector<std::size_t> train_idx(n_train), hold_idx(n_hold);
    std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
    std::iota(hold_idx.begin(), hold_idx.end(), n_train);
    const TripletSet heldout = take_triplets(all, hold_idx);

    result.initial_separation = triplet_separation(enc, rules, heldout);
    const std::vector<double> weights = rules.weights();

    Optimizer se_opt(cfg.optimizer);
    Optimizer re_opt(cfg.optimizer);
    std::vector<std::size_t> order = train_idx;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const bool update_se = epoch % 2 == 0;
        batch_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            const std::size_t B = idx.size();
            std::vector<std::size_t> rule_of(B);
            for (std::size_t k = 0; k < B; ++k) rule_of[k] = all.rule[idx[k]];

            MlpForward rf = rule_encode_batch(enc.rule, rules.rules());
            const Matrix samples = vconcat(gather_rows(all.positive, idx), gather_rows(all.negative, idx));
            MlpForward sf = mlp_forward(enc.sample.mlp, samples);
            Matrix pos_emb(B, sf.output.cols()), neg_emb(B, sf.output.cols());
            for (std::size_t k = 0; k < B; ++k) {
                std::copy(sf.output.row(k).begin(), sf.output.row(k).end(), pos_emb.row(k).begin());
                std::copy(sf.output.row(B + k).begin(), sf.output.row(B + k).end(), neg_emb.row(k).begin());
            }
            const TripletBatchLoss tl = triplet_batch_loss(rf.output, rule_of, pos_emb, neg_emb, weights, cfg.margin);
            if (!std::isfinite(tl.loss))
                throw NumericError("pretrain: non-finite triplet loss at epoch " + std::to_string(epoch) +
                                   ", batch starting " + std::to_string(start));
            loss_sum += tl.loss * static_cast<double>(B);

            if (update_se) {
                const Matrix sample_grad = vconcat(tl.positive_grad, tl.negative_grad);
                const MlpBackward bw = mlp_backward(enc.sample.mlp, sf.cache, sample_grad);
                std::vector<ParamSlot> slots;
                append_mlp_slots(slots, enc.sample.mlp, bw.grads, "sample_encoder");
                se_opt.step(slots);
                ++enc.sample.mlp.revision;
            } else {
                const RuleEncoderGrads g = rule_encode_backward(enc.rule, rules.rules(), rf.cache, tl.rule_grad);
                std::vector<ParamSlot> slots;
                slots.push_back({"rule_encoder.embedding", enc.rule.embedding.values(), g.embedding.values()});
                slots.push_back({"rule_encoder.null", enc.rule.null_vector, g.null_vector});
                append_mlp_slots(slots, enc.rule.mlp, g.mlp, "rule_encoder");
                re_opt.step(slots);
                ++enc.rule.mlp.revision;
            }
        }
        PretrainEpoch rec;
        rec.epoch = epoch;
        rec.updated_sample_encoder = update_se;
        rec.mean_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
        rec.heldout_separation = triplet_separation(enc, rules, heldout);
        result.history.push_back(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr int kEncoderFormatVersion = 1;

inline Json encoders_to_json(const EncoderPair& enc) {
    Json j = Json::object();
    j["format_version"] = kEncoderFormatVersion;
    j["L"] = enc.rule.latent();
    j["d"] = enc.rule.dim();
    j["ruleset_fingerprint"] = enc.ruleset_fingerprint;
    Json re = Json::object();
    re["embedding"] = to_json(enc.rule.embedding);
    re["mlp"] = to_json(enc.rule.mlp);
    j["rule_encoder"] = std::move(re);
    j["e_null"] = enc.rule.null_vector;
    Json se = Json::object();
    se["mlp"] = to_json(enc.sample.mlp);
    j["sample_encoder"] = std::move(se);
    return j;
}

inline EncoderPair encoders_from_json(const Json& j, const std::string& source = "encoders") {
    const int version = json_get<int>(j, "format_version", source);
    if (version != kEncoderFormatVersion)
        throw ParseError(source + ": unsupported encoder format_version " + std::to_string(version));
    EncoderPair enc;
    const auto L = json_get<std::size_t>(j, "L", source);
    const auto d = json_get<std::size_t>(j, "d", source);
    enc.ruleset_fingerprint = json_get<std::string>(j, "ruleset_fingerprint", source);
    if (!j.contains("rule_encoder") || !j.contains("sample_encoder"))
        throw ParseError(source + ": missing encoder sections");
    enc.rule.embedding = matrix_from_json(j["rule_encoder"]["embedding"], source + ".rule_encoder.embedding");
    enc.rule.mlp = mlp_from_json(j["rule_encoder"]["mlp"], source + ".rule_encoder.mlp");
    enc.rule.null_vector = json_get<std::vector<double>>(j, "e_null", source);
    enc.sample.mlp = mlp_from_json(j["sample_encoder"]["mlp"], source + ".sample_encoder.mlp");
    if (enc.rule.dim() != d || enc.rule.null_vector.size() != d || enc.rule.mlp.in_width() != 2 * d)
        throw ParseError(source + ": rule encoder does not match d=" + std::to_string(d));
    if (enc.rule.latent() != L || enc.sample.latent() != L)
        throw ParseError(source + ": encoders do not share L=" + std::to_string(L));
    return enc;
}

}  // namespace clevercatch
