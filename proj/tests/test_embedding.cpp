#include <gtest/gtest.h>

#include <cmath>

#include "clevercatch/embedding.hpp"
#include "oracles.hpp"

using namespace clevercatch;

namespace {

PretrainConfig tiny_config() {
    PretrainConfig cfg;
    cfg.latent = 8;
    cfg.dim = 4;
    cfg.rule_hidden = {16};
    cfg.sample_hidden = {24};
    cfg.epochs = 6;
    cfg.batch = 64;
    cfg.triplets.count = 1200;
    return cfg;
}

RuleSet toy_rules(std::size_t R, std::uint64_t seed) {
    Rng rng(seed);
    return cctest::small_ruleset(rng, std::max<std::size_t>(R, 6), R);
}

}  // namespace

TEST(RuleEncoder, OutputLengthAndOrderSensitivity) {
    const Vocabulary v({"a", "b", "c"});
    const RuleSet rs({Rule{RuleKind::binary, 0, 1, 0.5}, Rule{RuleKind::binary, 1, 0, 0.5},
                      Rule{RuleKind::unary, 2, {}, 0.5}},
                     v);
    Rng rng(1);
    const EncoderPair enc = init_encoders(rs, tiny_config(), rng);
    const auto pq = rule_encode(enc.rule, rs[0]);
    const auto qp = rule_encode(enc.rule, rs[1]);
    EXPECT_EQ(pq.size(), 8u);
    EXPECT_EQ(rule_encode(enc.rule, rs[2]).size(), 8u);
    EXPECT_NE(pq, qp);
    EXPECT_EQ(pq, rule_encode(enc.rule, rs[0]));
    // Batch and single encodings agree.
    const Matrix all = rule_embeddings(enc.rule, rs);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(all(0, k), pq[k]);
}

TEST(RuleEncoder, UnaryUsesNullVector) {
    const Vocabulary v({"a", "b"});
    const RuleSet rs({Rule{RuleKind::unary, 0, {}, 0.5}}, v);
    Rng rng(2);
    EncoderPair enc = init_encoders(rs, tiny_config(), rng);
    const auto before = rule_encode(enc.rule, rs[0]);
    enc.rule.null_vector[0] += 0.5;
    EXPECT_NE(rule_encode(enc.rule, rs[0]), before);
}

TEST(RuleEncoder, OutOfVocabularyRejected) {
    const Vocabulary v({"a", "b"});
    const RuleSet rs({Rule{RuleKind::unary, 0, {}, 0.5}}, v);
    Rng rng(3);
    const EncoderPair enc = init_encoders(rs, tiny_config(), rng);
    EXPECT_THROW(rule_encode(enc.rule, Rule{RuleKind::unary, 7, {}, 0.5}), ContractError);
}

TEST(SampleEncoder, ShapeAndDeterminism) {
    const RuleSet rs = toy_rules(3, 4);
    Rng rng(4);
    const EncoderPair enc = init_encoders(rs, tiny_config(), rng);
    std::vector<double> delta(45, 0.1);
    const auto a = sample_encode(enc.sample, delta);
    EXPECT_EQ(a.size(), 8u);
    EXPECT_EQ(a, sample_encode(enc.sample, delta));
    std::vector<double> wrong(44, 0.1);
    EXPECT_THROW(sample_encode(enc.sample, wrong), ShapeError);
}

TEST(Triplets, FrequencyFollowsWeights) {
    const Vocabulary v({"a", "b", "c"});
    const RuleSet rs({Rule{RuleKind::unary, 0, {}, 0.9}, Rule{RuleKind::unary, 1, {}, 0.1}}, v);
    TripletConfig cfg;
    cfg.count = 10000;
    cfg.weight_floor = 0.0;
    Rng rng(5);
    const TripletSet ts = gen_synthetic_triplets(rs, cfg, rng);
    double first = 0.0;
    for (std::size_t j : ts.rule) first += j == 0;
    const double n = 10000.0, p = 0.9;
    EXPECT_NEAR(first / n, p, 3.0 * std::sqrt(p * (1 - p) / n));
}

TEST(Triplets, BlockSignsAndRange) {
    const RuleSet rs = toy_rules(4, 6);
    TripletConfig cfg;
    cfg.count = 500;
    cfg.sigma = 0.8;  // wide enough that clipping happens
    Rng rng(6);
    const TripletSet ts = gen_synthetic_triplets(rs, cfg, rng);
    for (std::size_t k = 0; k < ts.size(); ++k) {
        const std::size_t j = ts.rule[k];
        for (std::size_t c = 0; c < ts.positive.cols(); ++c) {
            const double p = ts.positive(k, c), q = ts.negative(k, c);
            EXPECT_GE(p, -1.0);
            EXPECT_LE(p, 1.0);
            EXPECT_GE(q, -1.0);
            EXPECT_LE(q, 1.0);
            if (c / 15 == j) {
                EXPECT_GE(p, 0.5);
                EXPECT_LT(p, 1.0);
                EXPECT_LE(q, -0.5);
                EXPECT_GT(q, -1.0);
            }
        }
    }
}

TEST(Triplets, ZeroSigmaZeroBackground) {
    const RuleSet rs = toy_rules(3, 7);
    TripletConfig cfg;
    cfg.count = 100;
    cfg.sigma = 0.0;
    Rng rng(7);
    const TripletSet ts = gen_synthetic_triplets(rs, cfg, rng);
    for (std::size_t k = 0; k < ts.size(); ++k)
        for (std::size_t c = 0; c < ts.positive.cols(); ++c)
            if (c / 15 != ts.rule[k]) {
                EXPECT_EQ(ts.positive(k, c), 0.0);
                EXPECT_EQ(ts.negative(k, c), 0.0);
            }
}

TEST(Triplets, ConfigChecks) {
    const RuleSet rs = toy_rules(3, 8);
    Rng rng(8);
    TripletConfig cfg;
    cfg.count = 2;
    EXPECT_THROW(gen_synthetic_triplets(rs, cfg, rng), ConfigError);
    cfg.count = 10;
    cfg.lo = 0.8;
    cfg.hi = 0.5;
    EXPECT_THROW(gen_synthetic_triplets(rs, cfg, rng), ConfigError);
}

TEST(TripletLoss, Examples) {
    // d+^2 = 0.1, d-^2 = 1.0
    const std::vector<double> r{0.0, 0.0}, p{std::sqrt(0.1), 0.0}, n{0.0, 1.0};
    EXPECT_EQ(triplet_loss(r, p, n, 1.0, 0.5), 0.0);
    const std::vector<double> p2{0.0, 1.0};
    EXPECT_DOUBLE_EQ(triplet_loss(r, p2, n, 0.8, 0.5), 0.4);
    EXPECT_EQ(triplet_loss(r, p2, n, 0.0, 0.5), 0.0);
    const std::vector<double> bad{1.0};
    EXPECT_THROW(triplet_loss(r, bad, n, 1.0, 0.5), ShapeError);
}

TEST(TripletLoss, Properties) {
    Rng rng(9);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> r(3), p(3), n(3);
        for (auto* v : {&r, &p, &n})
            for (double& x : *v) x = rng.normal();
        const double m = rng.uniform(0.0, 2.0), w = rng.uniform();
        const double l1 = triplet_loss(r, p, n, 1.0, m);
        const double lw = triplet_loss(r, p, n, w, m);
        EXPECT_GE(l1, 0.0);
        EXPECT_DOUBLE_EQ(lw, w * l1);
        const double dp = squared_distance(p, r), dn = squared_distance(n, r);
        EXPECT_EQ(l1 == 0.0, dp + m <= dn);
    }
}

TEST(TripletLoss, BatchGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        EXPECT_LT(cctest::triplet_gradient_point(seed), 1e-5) << "seed " << seed;
}

TEST(Pretrain, ZeroEpochsReturnsInitialization) {
    const RuleSet rs = toy_rules(3, 10);
    PretrainConfig cfg = tiny_config();
    cfg.epochs = 0;
    cfg.seed = 3;
    const PretrainResult r = pretrain(rs, cfg);
    Rng rng(stage_seed(3, "encoder-init"));
    const EncoderPair init = init_encoders(rs, cfg, rng);
    EXPECT_TRUE(r.encoders.rule.same_parameters(init.rule));
    EXPECT_TRUE(r.encoders.sample.mlp.same_parameters(init.sample.mlp));
    EXPECT_TRUE(r.history.empty());
}

TEST(Pretrain, AlternationFreezesTheOtherEncoder) {
    const RuleSet rs = toy_rules(3, 11);
    PretrainConfig cfg = tiny_config();
    cfg.seed = 5;
    cfg.epochs = 0;
    const EncoderPair e0 = pretrain(rs, cfg).encoders;
    cfg.epochs = 1;
    const EncoderPair e1 = pretrain(rs, cfg).encoders;
    cfg.epochs = 2;
    const EncoderPair e2 = pretrain(rs, cfg).encoders;
    // Epoch 0 updates the sample encoder only.
    EXPECT_TRUE(e1.rule.same_parameters(e0.rule));
    EXPECT_FALSE(e1.sample.mlp.same_parameters(e0.sample.mlp));
    // Epoch 1 updates the rule encoder only.
    EXPECT_TRUE(e2.sample.mlp.same_parameters(e1.sample.mlp));
    EXPECT_FALSE(e2.rule.same_parameters(e1.rule));
}

TEST(Pretrain, DeterministicModelFile) {
    const RuleSet rs = toy_rules(3, 12);
    PretrainConfig cfg = tiny_config();
    cfg.epochs = 2;
    cfg.seed = 9;
    const std::string a = dump_json(encoders_to_json(pretrain(rs, cfg).encoders));
    const std::string b = dump_json(encoders_to_json(pretrain(rs, cfg).encoders));
    EXPECT_EQ(a, b);
    cfg.seed = 10;
    EXPECT_NE(a, dump_json(encoders_to_json(pretrain(rs, cfg).encoders)));
}

TEST(Pretrain, SeparatesToyRules) {
    const RuleSet rs = toy_rules(5, 13);
    PretrainConfig cfg = tiny_config();
    cfg.epochs = 12;
    cfg.seed = 1;
    const PretrainResult r = pretrain(rs, cfg);
    ASSERT_EQ(r.history.size(), 12u);
    EXPECT_GE(r.history.back().heldout_separation, 0.9);
    std::size_t rising = 0;
    for (std::size_t e = 1; e < r.history.size(); ++e)
        rising += r.history[e].heldout_separation >= r.history[e - 1].heldout_separation;
    EXPECT_GE(static_cast<double>(rising), 0.8 * static_cast<double>(r.history.size() - 1));
    for (const auto& h : r.history) {
        EXPECT_TRUE(std::isfinite(h.mean_loss));
        EXPECT_EQ(h.updated_sample_encoder, h.epoch % 2 == 0);
    }
}

TEST(Pretrain, RejectsBadConfig) {
    const RuleSet rs = toy_rules(3, 14);
    PretrainConfig cfg = tiny_config();
    cfg.batch = 0;
    EXPECT_THROW(pretrain(rs, cfg), ConfigError);
    cfg = tiny_config();
    cfg.holdout = 1.0;
    EXPECT_THROW(pretrain(rs, cfg), ConfigError);
}

TEST(EncoderFile, RoundTripAndKeyOrder) {
    const RuleSet rs = toy_rules(3, 15);
    Rng rng(15);
    const EncoderPair enc = init_encoders(rs, tiny_config(), rng);
    const Json j = encoders_to_json(enc);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"format_version", "L", "d", "ruleset_fingerprint", "rule_encoder",
                                              "e_null", "sample_encoder"}));
    const EncoderPair back = encoders_from_json(parse_json_text(dump_json(j), "t"));
    EXPECT_TRUE(back.rule.same_parameters(enc.rule));
    EXPECT_TRUE(back.sample.mlp.same_parameters(enc.sample.mlp));
    EXPECT_EQ(back.ruleset_fingerprint, fingerprint(rs));
    Json bad = j;
    bad["format_version"] = 2;
    EXPECT_THROW(encoders_from_json(bad), ParseError);
    bad = j;
    bad["L"] = 3;
    EXPECT_THROW(encoders_from_json(bad), ParseError);
}
