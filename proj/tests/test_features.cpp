#include <gtest/gtest.h>

#include <cmath>

#include "clevercatch/features.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace clevercatch;

namespace {

const std::string kHeader =
    "npi,year,specialty,drug,total_claims,total_30day_fills,total_day_supply,total_cost,total_beneficiaries\n";

RuleSet rules_for(const ClaimsTable& t, const std::string& text) { return parse_rules_text(text, t.drugs); }

}  // namespace

TEST(Shares, DirectEvaluation) {
    const ClaimsTable t = parse_claims_text(kHeader + "1,2020,GP,A,20,1,1,1,1\n1,2020,GP,B,80,1,1,1,1\n");
    const ShareTable s = compute_shares(t);
    const auto& py = s.at(0, 2020);
    EXPECT_DOUBLE_EQ(py.share(0, 0), 0.2);
    EXPECT_DOUBLE_EQ(py.share(1, 0), 0.8);
    EXPECT_DOUBLE_EQ(py.share(0, 1), 0.5);
}

TEST(Shares, ZeroChannelGivesZeroShares) {
    const ClaimsTable t = parse_claims_text(kHeader + "1,2020,GP,A,20,0,1,1,1\n1,2020,GP,B,80,0,1,1,1\n");
    const auto& py = compute_shares(t).at(0, 2020);
    EXPECT_EQ(py.share(0, 1), 0.0);
    EXPECT_EQ(py.share(1, 1), 0.0);
}

TEST(Shares, SingleDrugIsWhole) {
    const ClaimsTable t = parse_claims_text(kHeader + "1,2020,GP,A,20,3,1,9,1\n");
    const auto& py = compute_shares(t).at(0, 2020);
    for (std::size_t m = 0; m < kChannels; ++m) EXPECT_EQ(py.share(0, m), 1.0);
}

TEST(Shares, SumToOneOrAllZero) {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const ClaimsTable t = parse_claims_text(cctest::random_claims_csv(rng, 10, 6, 3));
        const ShareTable s = compute_shares(t);
        for (const auto& years : s.by_prescriber)
            for (const auto& py : years)
                for (std::size_t m = 0; m < kChannels; ++m) {
                    double sum = 0.0;
                    for (const auto& [d, v] : py.shares) {
                        EXPECT_GE(v[m], 0.0);
                        EXPECT_LE(v[m], 1.0);
                        sum += v[m];
                    }
                    EXPECT_TRUE(std::abs(sum - 1.0) <= 1e-9 || sum == 0.0) << sum;
                }
    }
}

TEST(Contrast, Examples) {
    PrescriberYearShares py;
    py.shares[0] = {0.3, 0.7, 0.3, 0.0, 0.0};
    py.shares[1] = {0.3, 0.1, 0.0, 0.0, 0.0};
    const Rule bin{RuleKind::binary, 0, 1, 1.0};
    const Rule un{RuleKind::unary, 0, {}, 1.0};
    const ChannelValues b = rule_contrast(py, bin);
    EXPECT_EQ(b[0], 0.0);
    EXPECT_DOUBLE_EQ(b[1], 0.6);
    EXPECT_DOUBLE_EQ(rule_contrast(py, un)[2], 0.3);
}

TEST(Aggregate, Examples) {
    const std::vector<double> v{-0.1, 0.2, 0.5};
    const YearSummary s = aggregate_over_years(v);
    EXPECT_EQ(s.min, -0.1);
    EXPECT_NEAR(s.mean, 0.2, 1e-15);
    EXPECT_EQ(s.max, 0.5);
    const std::vector<double> one{0.7};
    const YearSummary o = aggregate_over_years(one);
    EXPECT_EQ(o.min, 0.7);
    EXPECT_EQ(o.mean, 0.7);
    EXPECT_EQ(o.max, 0.7);
    const std::vector<double> flat{0.25, 0.25, 0.25};
    const YearSummary f = aggregate_over_years(flat);
    EXPECT_EQ(f.min, f.mean);
    EXPECT_EQ(f.mean, f.max);
    EXPECT_THROW(aggregate_over_years({}), ContractError);
}

TEST(FeatureMatrix, WidthAndNames) {
    EXPECT_EQ(feature_width(1), 15u);
    EXPECT_EQ(feature_width(413), 6195u);
    EXPECT_EQ(feature_width(413, FeatureMode::mean_claims_only), 413u);
    const auto names = feature_column_names(2);
    EXPECT_EQ(names[0], "rule1_clm_min");
    EXPECT_EQ(names[15 + 3 * 3 + 1], "rule2_cost_mean");
    EXPECT_EQ(names.back(), "rule2_bene_max");
}

TEST(FeatureMatrix, MatchesBruteForceOracle) {
    Rng rng(101);
    for (int trial = 0; trial < 40; ++trial) {
        const ClaimsTable t = parse_claims_text(cctest::random_claims_csv(rng, 10, 6, 3));
        const RuleSet rs = cctest::random_rules(rng, t.drugs, 5);
        const FeatureMatrix fm = build_feature_matrix(t, rs);
        const auto oracle = cctest::brute_force_features(t, rs);
        ASSERT_EQ(fm.values.size(), oracle.size());
        for (std::size_t k = 0; k < oracle.size(); ++k) EXPECT_NEAR(fm.values.data()[k], oracle[k], 1e-12) << k;
    }
}

TEST(FeatureMatrix, MeanClaimsOnlyIsSubsetOfFull) {
    Rng rng(5);
    const ClaimsTable t = parse_claims_text(cctest::random_claims_csv(rng, 10, 6, 3));
    const RuleSet rs = cctest::random_rules(rng, t.drugs, 5);
    const FeatureMatrix full = build_feature_matrix(t, rs);
    const FeatureMatrix lite = build_feature_matrix(t, rs, FeatureMode::mean_claims_only);
    ASSERT_EQ(lite.cols(), rs.size());
    for (std::size_t i = 0; i < full.rows(); ++i)
        for (std::size_t j = 0; j < rs.size(); ++j) EXPECT_EQ(lite.values(i, j), full.values(i, 15 * j + 1));
}

TEST(FeatureMatrix, AntisymmetricBinaryRules) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const ClaimsTable t = parse_claims_text(cctest::random_claims_csv(rng, 10, 6, 3));
        const RuleSet pq({Rule{RuleKind::binary, 0, 1, 0.5}}, t.drugs);
        const RuleSet qp({Rule{RuleKind::binary, 1, 0, 0.5}}, t.drugs);
        const ShareTable s = compute_shares(t);
        for (std::size_t i = 0; i < s.by_prescriber.size(); ++i)
            for (const auto& py : s.by_prescriber[i]) {
                const auto a = rule_contrast(py, pq[0]);
                const auto b = rule_contrast(py, qp[0]);
                for (std::size_t m = 0; m < kChannels; ++m) EXPECT_EQ(a[m], -b[m]);
            }
        // At the aggregate level min and max swap roles.
        const FeatureMatrix fa = build_feature_matrix(t, pq);
        const FeatureMatrix fb = build_feature_matrix(t, qp);
        for (std::size_t i = 0; i < fa.rows(); ++i)
            for (std::size_t m = 0; m < kChannels; ++m) {
                EXPECT_EQ(fa.values(i, 3 * m), -fb.values(i, 3 * m + 2));
                EXPECT_NEAR(fa.values(i, 3 * m + 1), -fb.values(i, 3 * m + 1), 1e-15);
            }
    }
}

TEST(FeatureMatrix, OrderedAndBounded) {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const ClaimsTable t = parse_claims_text(cctest::random_claims_csv(rng, 10, 6, 3));
        const RuleSet rs = cctest::random_rules(rng, t.drugs, 5);
        const FeatureMatrix fm = build_feature_matrix(t, rs);
        for (std::size_t i = 0; i < fm.rows(); ++i)
            for (std::size_t b = 0; b < rs.size() * kChannels; ++b) {
                const double lo = fm.values(i, 3 * b), mid = fm.values(i, 3 * b + 1), hi = fm.values(i, 3 * b + 2);
                EXPECT_LE(lo, mid + 1e-15);
                EXPECT_LE(mid, hi + 1e-15);
                EXPECT_GE(lo, -1.0);
                EXPECT_LE(hi, 1.0);
            }
    }
}

TEST(FeatureMatrix, ChannelScaleInvariance) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        ClaimsTable t = parse_claims_text(cctest::random_claims_csv(rng, 10, 6, 3));
        const RuleSet rs = cctest::random_rules(rng, t.drugs, 5);
        const FeatureMatrix before = build_feature_matrix(t, rs);
        // Scale one prescriber-year's cost channel by a power of two (exact).
        const auto& r0 = t.records.front();
        const std::size_t who = r0.prescriber;
        const int year = r0.year;
        for (auto& r : t.records)
            if (r.prescriber == who && r.year == year) r.metrics[3] *= 8.0;
        const FeatureMatrix after = build_feature_matrix(t, rs);
        EXPECT_EQ(before.values, after.values);
    }
}

TEST(FeatureMatrix, AbsentYearsNotImputed) {
    // Prescriber 1 appears only in 2020; its min/mean/max use that year alone.
    const ClaimsTable t = parse_claims_text(kHeader +
                                            "1,2020,GP,A,30,1,1,1,1\n1,2020,GP,B,10,1,1,1,1\n"
                                            "2,2020,GP,A,10,1,1,1,1\n2,2021,GP,B,10,1,1,1,1\n");
    const RuleSet rs = rules_for(t, "kind,drug_p,drug_q,weight\nunary,A,,1\n");
    const FeatureMatrix fm = build_feature_matrix(t, rs);
    EXPECT_EQ(fm.values(0, 0), 0.75);
    EXPECT_EQ(fm.values(0, 1), 0.75);
    EXPECT_EQ(fm.values(0, 2), 0.75);
    EXPECT_EQ(fm.values(1, 0), 0.0);
    EXPECT_EQ(fm.values(1, 1), 0.5);
    EXPECT_EQ(fm.values(1, 2), 1.0);
}

TEST(FeatureMatrix, RejectsForeignVocabulary) {
    const ClaimsTable t = parse_claims_text(kHeader + "1,2020,GP,A,30,1,1,1,1\n1,2020,GP,B,10,1,1,1,1\n");
    const RuleSet rs({Rule{RuleKind::unary, 0, {}, 1.0}}, Vocabulary({"B", "A"}));
    EXPECT_THROW(build_feature_matrix(t, rs), ContractError);
}

TEST(FeatureMatrix, CsvRoundTripIsExact) {
    Rng rng(9);
    const ClaimsTable t = parse_claims_text(cctest::random_claims_csv(rng, 10, 6, 3));
    const RuleSet rs = cctest::random_rules(rng, t.drugs, 5);
    const FeatureMatrix fm = build_feature_matrix(t, rs);
    const FeatureMatrix back = features_from_csv(features_to_csv(fm));
    EXPECT_EQ(back.npis, fm.npis);
    EXPECT_EQ(back.columns, fm.columns);
    EXPECT_EQ(back.values, fm.values);
}

TEST(FeatureMatrix, BinaryContainerLayout) {
    const Matrix m = Matrix::from_rows({{1.5, -0.25}, {0.0, 1.0}, {0.125, -1.0}});
    const std::string bytes = features_to_binary(m);
    ASSERT_EQ(bytes.size(), 5u + 16u + 6u * 8u);
    EXPECT_EQ(bytes.substr(0, 5), "CCFM1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 3u);   // rows, little endian
    EXPECT_EQ(static_cast<unsigned char>(bytes[13]), 2u);  // cols
    // 1.5 = 0x3FF8000000000000: most significant byte last.
    EXPECT_EQ(static_cast<unsigned char>(bytes[21 + 7]), 0x3Fu);
    EXPECT_EQ(static_cast<unsigned char>(bytes[21 + 6]), 0xF8u);
    EXPECT_EQ(features_from_binary(bytes), m);
    EXPECT_THROW(features_from_binary(bytes.substr(0, bytes.size() - 1)), ParseError);
    EXPECT_THROW(features_from_binary("CCFM2" + bytes.substr(5)), ParseError);
}
