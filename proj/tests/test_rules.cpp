#include <gtest/gtest.h>

#include "clevercatch/rules.hpp"
#include "test_support.hpp"

using namespace clevercatch;

namespace {

Vocabulary vocab_xyz() { return Vocabulary({"DrugX", "DrugY", "OpioidZ"}); }

}  // namespace

TEST(Rules, ParsesBinaryLine) {
    const RuleSet rs = parse_rules_text("kind,drug_p,drug_q,weight\nbinary,DrugX,DrugY,0.8\n", vocab_xyz());
    ASSERT_EQ(rs.size(), 1u);
    EXPECT_EQ(rs[0].kind, RuleKind::binary);
    EXPECT_EQ(rs[0].p, 0u);
    EXPECT_EQ(rs[0].q, std::optional<std::size_t>(1));
    EXPECT_EQ(rs[0].weight, 0.8);
}

TEST(Rules, ParsesUnaryLine) {
    const RuleSet rs = parse_rules_text("kind,drug_p,drug_q,weight\nunary,OpioidZ,,0.6\n", vocab_xyz());
    ASSERT_EQ(rs.size(), 1u);
    EXPECT_EQ(rs[0].kind, RuleKind::unary);
    EXPECT_FALSE(rs[0].q.has_value());
    EXPECT_EQ(rs[0].weight, 0.6);
}

TEST(Rules, RejectsBadWeight) {
    try {
        parse_rules_text("kind,drug_p,drug_q,weight\nbinary,DrugX,DrugY,1.2\n", vocab_xyz());
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("weight out of range"), std::string::npos);
    }
}

TEST(Rules, RejectsMalformedRules) {
    const std::string h = "kind,drug_p,drug_q,weight\n";
    EXPECT_THROW(parse_rules_text(h + "binary,DrugX,DrugX,0.5\n", vocab_xyz()), ParseError);
    EXPECT_THROW(parse_rules_text(h + "binary,DrugX,Nope,0.5\n", vocab_xyz()), ParseError);
    EXPECT_THROW(parse_rules_text(h + "binary,DrugX,,0.5\n", vocab_xyz()), ParseError);
    EXPECT_THROW(parse_rules_text(h + "unary,DrugX,DrugY,0.5\n", vocab_xyz()), ParseError);
    EXPECT_THROW(parse_rules_text(h + "ternary,DrugX,DrugY,0.5\n", vocab_xyz()), ParseError);
    EXPECT_THROW(parse_rules_text(h + "binary,DrugX,DrugY,0.5\nbinary,DrugX,DrugY,0.7\n", vocab_xyz()), ParseError);
    EXPECT_THROW(parse_rules_text(h, vocab_xyz()), ParseError);
    EXPECT_THROW(parse_rules_text("kind,p,q,w\n", vocab_xyz()), ParseError);
}

TEST(Rules, ErrorsCarryLineNumbers) {
    try {
        parse_rules_text("kind,drug_p,drug_q,weight\nbinary,DrugX,DrugY,0.5\nunary,Ghost,,0.5\n", vocab_xyz(), "r.csv");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("r.csv:3"), std::string::npos) << e.what();
    }
}

TEST(Rules, SerializeParseRoundTrip) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> names;
        for (int k = 0; k < 6; ++k) names.push_back("drug " + std::to_string(k) + (k % 2 ? ",x" : ""));
        const Vocabulary v(names);
        const RuleSet rs = cctest::random_rules(rng, v, 8);
        const RuleSet back = parse_rules_text(serialize_rules(rs), v);
        EXPECT_EQ(rs, back);
        EXPECT_EQ(fingerprint(rs), fingerprint(back));
    }
}

TEST(Rules, FingerprintTracksContent) {
    const Vocabulary v = vocab_xyz();
    const RuleSet a({Rule{RuleKind::binary, 0, 1, 0.5}}, v);
    const RuleSet b({Rule{RuleKind::binary, 0, 1, 0.6}}, v);
    const RuleSet c({Rule{RuleKind::binary, 0, 1, 0.5}}, Vocabulary({"DrugX", "DrugY", "OpioidZ", "W"}));
    EXPECT_NE(fingerprint(a), fingerprint(b));
    EXPECT_NE(fingerprint(a), fingerprint(c));
}

TEST(Rules, WithoutKindKeepsOrder) {
    const Vocabulary v({"a", "b", "c", "d"});
    const RuleSet rs({Rule{RuleKind::unary, 3, {}, 0.5}, Rule{RuleKind::binary, 0, 1, 0.2},
                      Rule{RuleKind::unary, 2, {}, 0.1}},
                     v);
    const RuleSet u = rs.without(RuleKind::binary);
    ASSERT_EQ(u.size(), 2u);
    EXPECT_EQ(u[0].p, 3u);
    EXPECT_EQ(u[1].p, 2u);
    EXPECT_EQ(rs.count(RuleKind::unary), 2u);
    EXPECT_THROW(RuleSet({}, v), ContractError);
    EXPECT_THROW(u.without(RuleKind::unary), ContractError);
}

TEST(Jaccard, Examples) {
    EXPECT_EQ(jaccard({"t1", "t2"}, {"t1", "t2"}), 1.0);
    EXPECT_EQ(jaccard({"t1"}, {"t2"}), 0.0);
    EXPECT_DOUBLE_EQ(jaccard({"t1", "t2"}, {"t2", "t3"}), 1.0 / 3.0);
    EXPECT_THROW(jaccard({}, {"t1"}), ContractError);
}

TEST(Jaccard, PropertiesOnRandomSets) {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        TargetSet a, b;
        while (a.empty()) for (int k = 0; k < 6; ++k) if (rng.uniform() < 0.4) a.insert("t" + std::to_string(k));
        while (b.empty()) for (int k = 0; k < 6; ++k) if (rng.uniform() < 0.4) b.insert("t" + std::to_string(k));
        const double j = jaccard(a, b);
        EXPECT_EQ(j, jaccard(b, a));
        EXPECT_GE(j, 0.0);
        EXPECT_LE(j, 1.0);
        EXPECT_EQ(j == 1.0, a == b);
        // Oracle by explicit set algebra.
        std::vector<std::string> inter, uni;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
        std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
        EXPECT_EQ(j, static_cast<double>(inter.size()) / static_cast<double>(uni.size()));
    }
}

TEST(CostPreference, ZeroGapEmitsNothing) {
    const DrugTargetMap t{{"A", {"x"}}, {"B", {"x"}}};
    const std::map<std::string, PriceStats> prices{{"A", {1000, 10}}, {"B", {500, 5}}};
    EXPECT_TRUE(derive_cost_preference_rules(t, prices, {}).empty());
}

TEST(CostPreference, ExtremeGapGivesUnitWeight) {
    const DrugTargetMap t{{"Cheap", {"x", "y"}}, {"Costly", {"x", "y"}}};
    const std::map<std::string, PriceStats> prices{{"Cheap", {1000, 10}}, {"Costly", {3000, 10}}};
    const auto rules = derive_cost_preference_rules(t, prices, {});
    ASSERT_EQ(rules.size(), 1u);
    EXPECT_EQ(rules[0].p, "Costly");
    EXPECT_EQ(rules[0].q, "Cheap");
    EXPECT_EQ(rules[0].weight, 1.0);  // gap (300-100)/100 = 2
    EXPECT_EQ(rules[0].tier, "extreme");
}

TEST(CostPreference, TiersAndWeights) {
    const DrugTargetMap t{{"A", {"x"}}, {"B", {"x"}}, {"C", {"x"}}};
    // cost/claim 100, 160, 250: pairs gaps B/A 0.6, C/A 1.5, C/B 0.5625
    const std::map<std::string, PriceStats> prices{{"A", {100, 1}}, {"B", {160, 1}}, {"C", {250, 1}}};
    const auto rules = derive_cost_preference_rules(t, prices, {});
    ASSERT_EQ(rules.size(), 3u);
    std::map<std::pair<std::string, std::string>, RuleSpec> by;
    for (const auto& r : rules) by[{r.p, r.q}] = r;
    EXPECT_DOUBLE_EQ(by.at({"B", "A"}).weight, 0.6 / 2.0);
    EXPECT_EQ(by.at({"B", "A"}).tier, "moderate");
    EXPECT_DOUBLE_EQ(by.at({"C", "A"}).weight, 1.5 / 2.0);
    EXPECT_EQ(by.at({"C", "A"}).tier, "high");
    EXPECT_DOUBLE_EQ(by.at({"C", "B"}).weight, 0.5625 / 2.0);
}

TEST(CostPreference, PartialTargetOverlapExcluded) {
    const DrugTargetMap t{{"A", {"x", "y"}}, {"B", {"x", "z"}}};
    const std::map<std::string, PriceStats> prices{{"A", {100, 1}}, {"B", {10000, 1}}};
    EXPECT_TRUE(derive_cost_preference_rules(t, prices, {}).empty());
}

TEST(CostPreference, MissingPriceWarnsAndSkips) {
    const DrugTargetMap t{{"A", {"x"}}, {"B", {"x"}}};
    const std::map<std::string, PriceStats> prices{{"A", {100, 1}}};
    std::vector<std::string> warnings;
    EXPECT_TRUE(derive_cost_preference_rules(t, prices, {}, &warnings).empty());
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(CostPreference, EachPairOnceWithCostlierFirst) {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        DrugTargetMap t;
        std::map<std::string, PriceStats> prices;
        for (int d = 0; d < 8; ++d) {
            const std::string name = "d" + std::to_string(d);
            t[name] = {"g" + std::to_string(rng.index(3))};
            prices[name] = {rng.uniform(10.0, 1000.0), 1.0 + std::floor(rng.uniform(0.0, 5.0))};
        }
        const auto rules = derive_cost_preference_rules(t, prices, {});
        std::set<std::set<std::string>> pairs;
        for (const auto& r : rules) {
            EXPECT_TRUE(pairs.insert({r.p, r.q}).second);
            const double cp = prices[r.p].total_cost / prices[r.p].total_claims;
            const double cq = prices[r.q].total_cost / prices[r.q].total_claims;
            EXPECT_GT(cp, cq);
            EXPECT_GE((cp - cq) / cq, 0.5);
            EXPECT_EQ(t[r.p], t[r.q]);
        }
    }
}

TEST(CostPreference, RejectsUnorderedThresholds) {
    EXPECT_THROW(derive_cost_preference_rules({}, {}, GapThresholds{1.0, 0.5, 2.0}), ConfigError);
}

TEST(Opioid, OneUnaryRulePerHighDrug) {
    cctest::TempDir dir("opioid");
    std::string csv = "drug,likelihood,weight\n";
    for (int k = 0; k < 37; ++k) csv += "hi" + std::to_string(k) + ",high,\n";
    csv += "lo,low,\nspecial,high,0.9\n";
    const auto ann = parse_opioid_annotations(dir.write("op.csv", csv));
    const auto rules = derive_opioid_rules(ann);
    ASSERT_EQ(rules.size(), 38u);
    for (std::size_t k = 0; k < 37; ++k) {
        EXPECT_EQ(rules[k].kind, RuleKind::unary);
        EXPECT_EQ(rules[k].weight, 0.5);
    }
    EXPECT_EQ(rules.back().p, "special");
    EXPECT_EQ(rules.back().weight, 0.9);
}

TEST(Opioid, NoHighDrugsNoRules) {
    cctest::TempDir dir("opioid");
    const auto ann = parse_opioid_annotations(dir.write("op.csv", "drug,likelihood\na,low\n"));
    EXPECT_TRUE(derive_opioid_rules(ann).empty());
}

TEST(Opioid, UnknownLikelihoodRejected) {
    cctest::TempDir dir("opioid");
    EXPECT_THROW(parse_opioid_annotations(dir.write("op.csv", "drug,likelihood\na,medium\n")), ParseError);
}

TEST(DrugTargets, ParsesPairs) {
    cctest::TempDir dir("targets");
    const auto map = parse_drug_targets(dir.write("t.csv", "drug,target\nA,t1\nA,t2\nB,t1\n"));
    EXPECT_EQ(map.at("A"), (TargetSet{"t1", "t2"}));
    EXPECT_EQ(map.at("B"), (TargetSet{"t1"}));
}
