#include <gtest/gtest.h>

#include "clevercatch/config.hpp"
#include "test_support.hpp"

using namespace clevercatch;

TEST(Config, Defaults) {
    const RunConfig c;
    EXPECT_EQ(c.seed, 0u);
    EXPECT_EQ(c.k_list, (std::vector<std::size_t>{10, 20, 50, 100}));
    EXPECT_EQ(c.detector.hidden, (std::vector<std::size_t>{64, 32}));
    EXPECT_EQ(c.threshold, 0.5);
    EXPECT_NE(c.stage("pretrain"), c.stage("train"));
}

TEST(Config, ParsesSectionsAndComments) {
    RunConfig c;
    apply_config_text(c,
                      "# run settings\n"
                      "[run]\n"
                      "seed = 17\n"
                      "out_dir = runs/a\n"
                      "\n"
                      "[detector]\n"
                      "; comment\n"
                      "lambda = 0.25\n"
                      "hidden = 8, 4\n"
                      "optimizer = sgd\n"
                      "[alignment]\n"
                      "weighted_columns = true\n"
                      "[evaluation]\n"
                      "k_list = 5,10\n"
                      "ablation_groups = opioid\n",
                      "cfg");
    EXPECT_EQ(c.seed, 17u);
    EXPECT_EQ(c.out_dir, "runs/a");
    EXPECT_EQ(c.detector.lambda, 0.25);
    EXPECT_EQ(c.detector.hidden, (std::vector<std::size_t>{8, 4}));
    EXPECT_EQ(c.detector.optimizer.kind, OptimizerKind::sgd);
    EXPECT_TRUE(c.alignment.weighted_columns);
    EXPECT_EQ(c.k_list, (std::vector<std::size_t>{5, 10}));
    EXPECT_EQ(c.ablation_groups, std::vector<std::string>{"opioid"});
}

TEST(Config, ErrorsNameTheLine) {
    auto fails_with = [](const std::string& text, const std::string& needle) {
        RunConfig c;
        try {
            apply_config_text(c, text, "cfg");
            ADD_FAILURE() << text;
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    fails_with("[detector]\nlamda = 0.5\n", "cfg:2: unknown key 'detector.lamda'");
    fails_with("seed = 1\n", "cfg:1");
    fails_with("[run\n", "malformed section");
    fails_with("[run]\nseed\n", "key = value");
    fails_with("[run]\nseed = -3\n", "cfg:2");
    fails_with("[detector]\nlambda = abc\n", "cfg:2");
    fails_with("[detector]\noptimizer = rmsprop\n", "cfg:2");
    fails_with("[evaluation]\nablation_groups = cost_preference, dosage\n", "dosage");
    fails_with("[features]\nmode = half\n", "cfg:2");
}

TEST(Config, OverridesApplyAfterFile) {
    cctest::TempDir dir("config");
    const auto path = dir.write("run.ini", "[detector]\nlambda = 0.3\n[run]\nseed = 2\n");
    RunConfig c = load_config(path);
    EXPECT_EQ(c.detector.lambda, 0.3);
    apply_override(c, "detector.lambda=0");
    apply_override(c, " pretrain.epochs = 7 ");
    EXPECT_EQ(c.detector.lambda, 0.0);
    EXPECT_EQ(c.pretrain.epochs, 7u);
    EXPECT_THROW(apply_override(c, "detector.lambda"), ConfigError);
    EXPECT_THROW(apply_override(c, "detector.nope=1"), ConfigError);
    EXPECT_THROW(load_config(dir / "missing.ini"), ConfigError);
}

TEST(Config, TextRoundTrip) {
    RunConfig c;
    apply_override(c, "detector.lambda=0.125");
    apply_override(c, "simulator.n_providers=321");
    apply_override(c, "evaluation.ablation_seeds=1,2,3");
    apply_override(c, "pretrain.sample_hidden=5");
    const std::string text = config_to_text(c);
    RunConfig back;
    apply_config_text(back, text, "snapshot");
    EXPECT_EQ(config_to_text(back), text);
    EXPECT_EQ(dump_json(config_snapshot(back)), dump_json(config_snapshot(c)));
    EXPECT_EQ(back.simulator.n_providers, 321u);
    EXPECT_EQ(back.ablation_seeds, (std::vector<std::uint64_t>{1, 2, 3}));
}
