#include <gtest/gtest.h>

#include <cmath>

#include "clevercatch/detector.hpp"
#include "oracles.hpp"

using namespace clevercatch;

namespace {

struct Toy {
    RuleSet rules;
    EncoderPair enc;
    Matrix x;
    std::vector<int> labels;
};

// Two rules, 30 feature columns; positives have a high first rule block.
Toy make_toy(std::uint64_t seed, std::size_t n = 120) {
    Rng rng(seed);
    Toy t;
    t.rules = RuleSet({Rule{RuleKind::binary, 0, 1, 0.8}, Rule{RuleKind::unary, 2, {}, 0.6}},
                      Vocabulary({"a", "b", "c"}));
    PretrainConfig pc;
    pc.latent = 6;
    pc.dim = 3;
    pc.rule_hidden = {8};
    pc.sample_hidden = {12};
    t.enc = init_encoders(t.rules, pc, rng);
    t.x = Matrix(n, 30);
    t.labels.assign(n, kUnlabeled);
    for (std::size_t i = 0; i < n; ++i) {
        const bool fraud = i % 6 == 0;
        for (std::size_t c = 0; c < 30; ++c) t.x(i, c) = 0.1 * rng.normal();
        if (fraud)
            for (std::size_t c = 0; c < 15; ++c) t.x(i, c) += 0.6;
        if (i % 2 == 0) t.labels[i] = fraud ? 1 : 0;
    }
    return t;
}

DetectorConfig small_cfg() {
    DetectorConfig cfg;
    cfg.hidden = {16, 8};
    cfg.epochs = 8;
    cfg.batch = 32;
    cfg.seed = 4;
    return cfg;
}

}  // namespace

TEST(Bce, SupervisedExamples) {
    const std::vector<double> half{0.5, 0.5};
    const std::vector<int> y{1, 0};
    EXPECT_NEAR(supervised_loss(half, y).loss, std::log(2.0), 1e-15);
    const std::vector<double> perfect{1.0, 0.0};
    const double l = supervised_loss(perfect, y).loss;
    EXPECT_LT(l, 1e-6);
    EXPECT_GT(l, 0.0);
    const std::vector<int> none{kUnlabeled, kUnlabeled};
    EXPECT_THROW(supervised_loss(half, none), ContractError);
    const std::vector<int> bad{2, 0};
    EXPECT_THROW(supervised_loss(half, bad), ContractError);
}

TEST(Bce, UnlabeledEntriesIgnored) {
    const std::vector<double> s{0.9, 0.2, 0.7};
    const std::vector<int> y{1, kUnlabeled, 0};
    const LossAndGrad l = supervised_loss(s, y);
    EXPECT_NEAR(l.loss, -(std::log(0.9) + std::log(0.3)) / 2.0, 1e-15);
    EXPECT_EQ(l.grad[1], 0.0);
}

TEST(Bce, AlignmentExamples) {
    const std::vector<double> half{0.5};
    EXPECT_NEAR(alignment_loss(half, half).loss, std::log(2.0), 1e-15);
    Rng rng(1);
    std::vector<double> y(20);
    for (double& v : y) v = rng.uniform(0.05, 0.95);
    double entropy = 0.0;
    for (double v : y) entropy += -(v * std::log(v) + (1 - v) * std::log(1 - v)) / 20.0;
    EXPECT_NEAR(alignment_loss(y, y).loss, entropy, 1e-14);
    std::vector<double> off = y;
    for (double& v : off) v = std::clamp(v + 0.03, 0.0, 1.0);
    EXPECT_GT(alignment_loss(off, y).loss, alignment_loss(y, y).loss);
    const std::vector<double> bad{1.5};
    EXPECT_THROW(alignment_loss(half, bad), ContractError);
}

TEST(Bce, GradientSuite) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        EXPECT_LT(cctest::detector_gradient_point(seed, cctest::DetectorLoss::supervised), 1e-5) << seed;
        EXPECT_LT(cctest::detector_gradient_point(seed, cctest::DetectorLoss::alignment), 1e-5) << seed;
        EXPECT_LT(cctest::detector_gradient_point(seed, cctest::DetectorLoss::hybrid), 1e-5) << seed;
    }
}

TEST(HybridTrain, LambdaZeroMatchesSupervisedBitwise) {
    const Toy t = make_toy(2);
    DetectorConfig cfg = small_cfg();
    cfg.lambda = 0.0;
    const TrainResult h = hybrid_train(t.x, t.labels, t.enc, t.rules, cfg);
    const TrainResult s = train_supervised(t.x, t.labels, cfg);
    EXPECT_TRUE(h.detector.mlp.same_parameters(s.detector.mlp));
    cfg.lambda = 0.5;
    const TrainResult h2 = hybrid_train(t.x, t.labels, t.enc, t.rules, cfg);
    EXPECT_FALSE(h2.detector.mlp.same_parameters(s.detector.mlp));
}

TEST(HybridTrain, HistoryFiniteAndSupervisedFalls) {
    const Toy t = make_toy(3);
    DetectorConfig cfg = small_cfg();
    const TrainResult r = hybrid_train(t.x, t.labels, t.enc, t.rules, cfg);
    ASSERT_EQ(r.history.size(), cfg.epochs);
    for (const auto& h : r.history) {
        EXPECT_TRUE(std::isfinite(h.supervised));
        EXPECT_TRUE(std::isfinite(h.alignment));
        EXPECT_TRUE(std::isfinite(h.total));
        EXPECT_GE(h.mean_pseudo_label, 0.0);
        EXPECT_LE(h.mean_pseudo_label, 1.0);
    }
    for (std::size_t e = 1; e < 5; ++e) EXPECT_LE(r.history[e].supervised, r.history[e - 1].supervised) << e;
    EXPECT_TRUE(r.calibration.initialized);
}

TEST(HybridTrain, Deterministic) {
    const Toy t = make_toy(4);
    const TrainResult a = hybrid_train(t.x, t.labels, t.enc, t.rules, small_cfg());
    const TrainResult b = hybrid_train(t.x, t.labels, t.enc, t.rules, small_cfg());
    EXPECT_EQ(dump_json(detector_to_json(a.detector)), dump_json(detector_to_json(b.detector)));
}

TEST(HybridTrain, FingerprintMismatchNamesBoth) {
    const Toy t = make_toy(5);
    const RuleSet other({Rule{RuleKind::binary, 1, 0, 0.8}, Rule{RuleKind::unary, 2, {}, 0.6}}, Vocabulary({"a", "b", "c"}));
    try {
        hybrid_train(t.x, t.labels, t.enc, other, small_cfg());
        FAIL();
    } catch (const FingerprintError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(fingerprint(t.rules)), std::string::npos) << msg;
        EXPECT_NE(msg.find(fingerprint(other)), std::string::npos) << msg;
    }
}

TEST(HybridTrain, InputChecks) {
    const Toy t = make_toy(6);
    std::vector<int> none(t.labels.size(), kUnlabeled);
    EXPECT_THROW(hybrid_train(t.x, none, t.enc, t.rules, small_cfg()), ContractError);
    std::vector<int> short_labels(3, 0);
    EXPECT_THROW(hybrid_train(t.x, short_labels, t.enc, t.rules, small_cfg()), ShapeError);
    DetectorConfig cfg = small_cfg();
    cfg.lambda = -1.0;
    EXPECT_THROW(hybrid_train(t.x, t.labels, t.enc, t.rules, cfg), ConfigError);
    EXPECT_THROW(hybrid_train(Matrix(t.x.rows(), 29), t.labels, t.enc, t.rules, small_cfg()), ShapeError);
}

TEST(Score, RanksAndTies) {
    const Toy t = make_toy(7, 12);
    Matrix x = t.x;
    // Rows 3 and 8 identical.
    std::copy(x.row(3).begin(), x.row(3).end(), x.row(8).begin());
    const TrainResult r = hybrid_train(x, t.labels, t.enc, t.rules, small_cfg());
    const ScoreReport rep = score(r.detector, x);
    EXPECT_EQ(rep.scores[3], rep.scores[8]);
    EXPECT_LT(rep.ranks[3], rep.ranks[8]);
    std::vector<std::size_t> sorted = rep.ranks;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) EXPECT_EQ(sorted[k], k + 1);
    for (std::size_t k = 1; k < rep.order.size(); ++k) EXPECT_GE(rep.scores[rep.order[k - 1]], rep.scores[rep.order[k]]);
    const ScoreReport again = score(r.detector, x);
    EXPECT_EQ(again.scores, rep.scores);
    EXPECT_EQ(again.ranks, rep.ranks);
    for (double s : rep.scores) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
    EXPECT_THROW(score(r.detector, Matrix(2, 29)), ShapeError);
}

TEST(Score, SingleRow) {
    const Toy t = make_toy(8);
    const TrainResult r = hybrid_train(t.x, t.labels, t.enc, t.rules, small_cfg());
    const ScoreReport rep = score(r.detector, Matrix(1, 30, 0.1));
    EXPECT_EQ(rep.ranks, std::vector<std::size_t>{1});
}

TEST(PseudoLabelClassifier, IdenticalSamplesSitOnTheBoundary) {
    const Toy t = make_toy(9);
    const Matrix same(10, 30, 0.2);
    const PseudoLabelResult p = pseudo_label_classifier(same, t.enc, t.rules, AlignmentSettings{});
    for (std::size_t i = 0; i < 10; ++i) {
        EXPECT_EQ(p.pseudo[i], 0.5);
        EXPECT_EQ(p.predicted[i], 0);
        EXPECT_EQ(p.costs[i], p.costs[0]);
    }
}

TEST(PseudoLabelClassifier, ThresholdIsStrict) {
    const Toy t = make_toy(10);
    const PseudoLabelResult p = pseudo_label_classifier(t.x, t.enc, t.rules, AlignmentSettings{}, 0.5);
    for (std::size_t i = 0; i < p.pseudo.size(); ++i) EXPECT_EQ(p.predicted[i], p.pseudo[i] > 0.5 ? 1 : 0);
    EXPECT_TRUE(p.plan.converged);
}

TEST(DetectorFile, RoundTripAndKeyOrder) {
    const Toy t = make_toy(11);
    const TrainResult r = hybrid_train(t.x, t.labels, t.enc, t.rules, small_cfg());
    const Json j = detector_to_json(r.detector);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"format_version", "input_width", "architecture", "weights", "lambda",
                                              "seed", "encoder_fingerprint"}));
    const Detector back = detector_from_json(parse_json_text(dump_json(j), "t"));
    EXPECT_TRUE(back.mlp.same_parameters(r.detector.mlp));
    EXPECT_EQ(back.encoder_fingerprint, fingerprint(t.rules));
    EXPECT_EQ(score(back, t.x).scores, score(r.detector, t.x).scores);
    Json bad = j;
    bad["input_width"] = 31;
    EXPECT_THROW(detector_from_json(bad), ParseError);
    bad = j;
    bad.erase("weights");
    EXPECT_THROW(detector_from_json(bad), ParseError);
}
