// clevercatch/simulator.hpp
// Synthetic claims with planted cost-preference and opioid fraud.
//
// Drug layout: the first 2*n_pairs drugs form interchangeable pairs
// (even = cheap, odd = costly, identical targets), the next n_opioids are
// opioids, the rest are fillers with their own targets.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/ingest.hpp"
#include "clevercatch/io.hpp"
#include "clevercatch/json_io.hpp"
#include "clevercatch/rng.hpp"
#include "clevercatch/rules.hpp"

namespace clevercatch {

struct SimConfig {
    std::size_t n_providers = 2000;
    std::size_t n_drugs = 30;
    std::size_t n_years = 3;
    double fraud_rate = 0.05;
    double scenario_mix = 0.7;  // fraction of frauds of the cost-preference kind
    double beta = 4.0;
    std::uint64_t seed = 0;
    double concentration = 0.3;  // Dirichlet alpha per filler drug
    double focus = 60.0;         // alpha multiplier for pair and opioid drugs
    std::size_t n_pairs = 3;
    std::size_t n_opioids = 2;
    double mean_volume = 400.0;  // claims per provider-year
    double label_fraction = 0.02;  // share of providers whose label is visible for training
    double opioid_weight = 0.7;
    int first_year = 2014;
};

inline void validate(const SimConfig& c) {
    auto fail = [](const std::string& m) { throw ConfigError("simulate: " + m); };
    if (c.n_providers < 1) fail("n_providers must be >= 1");
    if (c.n_drugs < 4) fail("n_drugs must be >= 4");
    if (c.n_years < 1) fail("n_years must be >= 1");
    if (c.n_pairs < 1 && c.n_opioids < 1) fail("need at least one pair or opioid drug");
    if (2 * c.n_pairs + c.n_opioids > c.n_drugs) fail("n_drugs must be >= 2*n_pairs + n_opioids");
    if (!(c.fraud_rate >= 0.0 && c.fraud_rate < 1.0)) fail("fraud_rate must lie in [0, 1)");
    if (c.fraud_rate > 0.0 && c.fraud_rate * static_cast<double>(c.n_providers) < 1.0)
        fail("fraud_rate * n_providers must be >= 1");
    if (!(c.scenario_mix >= 0.0 && c.scenario_mix <= 1.0)) fail("scenario_mix must lie in [0, 1]");
    if (c.scenario_mix > 0.0 && c.n_pairs == 0) fail("scenario_mix > 0 needs n_pairs >= 1");
    if (c.scenario_mix < 1.0 && c.fraud_rate > 0.0 && c.n_opioids == 0) fail("scenario_mix < 1 needs n_opioids >= 1");
    if (!(c.beta > 1.0)) fail("beta must be > 1");
    if (!(c.concentration > 0.0) || !(c.focus > 0.0)) fail("concentration and focus must be positive");
    if (!(c.mean_volume >= 1.0)) fail("mean_volume must be >= 1");
    if (!(c.label_fraction > 0.0 && c.label_fraction <= 1.0)) fail("label_fraction must lie in (0, 1]");
    if (!(c.opioid_weight >= 0.0 && c.opioid_weight <= 1.0)) fail("opioid_weight must lie in [0, 1]");
}

inline const char* kScenarioCost = "cost_preference";
inline const char* kScenarioOpioid = "opioid";

struct SimDrug {
    std::string name;
    double price = 0.0;         // mean cost per claim
    double fill_ratio = 1.2;    // 30-day fills per claim
    double days_per_fill = 30.0;
    double bene_ratio = 0.6;    // beneficiaries per claim
    std::vector<std::string> targets;
    bool opioid = false;
};

struct SimDataset {
    SimConfig config;
    std::vector<SimDrug> drugs;
    ClaimsTable claims;
    std::vector<int> labels;          // per provider, in claims.prescribers order
    std::vector<bool> labeled;        // label visible for training
    std::vector<std::string> scenario;  // "" for honest providers
    std::vector<int> planted_rule;    // rule index for cost-preference frauds, -1 otherwise
    std::vector<RuleSpec> rules;
};

inline std::string sim_npi(std::size_t i) { return std::to_string(1000000000ULL + 1 + i); }

// Costly member times beta, cheap member divided by beta, then renormalised.
inline void shift_pair(std::vector<double>& shares, std::size_t cheap, std::size_t costly, double beta) {
    shares[costly] *= beta;
    shares[cheap] /= beta;
    double total = 0.0;
    for (double s : shares) total += s;
    for (double& s : shares) s /= total;
}

inline void boost_drugs(std::vector<double>& shares, std::size_t first, std::size_t count, double beta) {
    double total = 0.0;
    for (std::size_t d = first; d < first + count; ++d) shares[d] *= beta;
    for (double s : shares) total += s;
    for (double& s : shares) s /= total;
}

inline std::vector<std::size_t> multinomial(Rng& rng, std::size_t trials, std::span<const double> probs) {
    std::vector<double> cdf(probs.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) cdf[k] = acc += probs[k];
    std::vector<std::size_t> counts(probs.size(), 0);
    for (std::size_t t = 0; t < trials; ++t) {
        const double u = rng.uniform() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        ++counts[static_cast<std::size_t>(it - cdf.begin())];
    }
    return counts;
}

inline SimDataset simulate(const SimConfig& cfg) {
    validate(cfg);
    SimDataset ds;
    ds.config = cfg;
    const std::size_t N = cfg.n_providers;
    const std::size_t D = cfg.n_drugs;

    // Drug catalogue.
    Rng drug_rng(stage_seed(cfg.seed, "sim-drugs"));
    static constexpr double kGaps[] = {0.8, 1.5, 3.0};  // moderate, high, extreme tiers
    ds.drugs.resize(D);
    for (std::size_t d = 0; d < D; ++d) {
        auto& g = ds.drugs[d];
        char buf[32];
        std::snprintf(buf, sizeof buf, "drug%03zu", d + 1);
        g.name = buf;
        g.price = std::exp(drug_rng.normal(std::log(40.0), 0.7));
        g.fill_ratio = drug_rng.uniform(1.0, 1.4);
        g.days_per_fill = drug_rng.uniform(27.0, 33.0);
        g.bene_ratio = drug_rng.uniform(0.5, 0.7);
        g.targets = {"T" + std::to_string(d + 1)};
    }
    for (std::size_t k = 0; k < cfg.n_pairs; ++k) {
        auto& cheap = ds.drugs[2 * k];
        auto& costly = ds.drugs[2 * k + 1];
        const double gap = kGaps[k % 3] * drug_rng.uniform(1.0, 1.2);
        costly.price = cheap.price * (1.0 + gap);
        costly.targets = cheap.targets = {"T" + std::to_string(2 * k + 1), "P" + std::to_string(k + 1)};
    }
    const std::size_t opioid_first = 2 * cfg.n_pairs;
    for (std::size_t o = 0; o < cfg.n_opioids; ++o) ds.drugs[opioid_first + o].opioid = true;

    // Planted rules: one binary rule per pair, then one unary rule per opioid.
    const GapThresholds tiers;
    for (std::size_t k = 0; k < cfg.n_pairs; ++k) {
        const auto& cheap = ds.drugs[2 * k];
        const auto& costly = ds.drugs[2 * k + 1];
        const double gap = (costly.price - cheap.price) / cheap.price;
        RuleSpec s;
        s.kind = RuleKind::binary;
        s.p = costly.name;
        s.q = cheap.name;
        s.weight = std::min(1.0, gap / tiers.extreme);
        s.tier = gap >= tiers.extreme ? "extreme" : gap >= tiers.high ? "high" : "moderate";
        ds.rules.push_back(std::move(s));
    }
    for (std::size_t o = 0; o < cfg.n_opioids; ++o) {
        RuleSpec s;
        s.kind = RuleKind::unary;
        s.p = ds.drugs[opioid_first + o].name;
        s.weight = cfg.opioid_weight;
        s.tier = "opioid";
        ds.rules.push_back(std::move(s));
    }

    // Fraud assignment.
    Rng fraud_rng(stage_seed(cfg.seed, "sim-fraud"));
    const auto n_fraud = static_cast<std::size_t>(std::llround(cfg.fraud_rate * static_cast<double>(N)));
    const auto n_cost = static_cast<std::size_t>(std::llround(cfg.scenario_mix * static_cast<double>(n_fraud)));
    std::vector<std::size_t> perm(N);
    for (std::size_t i = 0; i < N; ++i) perm[i] = i;
    fraud_rng.shuffle(perm);
    ds.labels.assign(N, 0);
    ds.scenario.assign(N, "");
    ds.planted_rule.assign(N, -1);
    for (std::size_t f = 0; f < n_fraud; ++f) {
        const std::size_t i = perm[f];
        ds.labels[i] = 1;
        if (f < n_cost) {
            ds.scenario[i] = kScenarioCost;
            ds.planted_rule[i] = static_cast<int>(fraud_rng.index(cfg.n_pairs));
        } else {
            ds.scenario[i] = kScenarioOpioid;
        }
    }

    // Stratified visible-label subset, at least one per non-empty class.
    Rng split_rng(stage_seed(cfg.seed, "sim-split"));
    ds.labeled.assign(N, false);
    for (int cls = 0; cls <= 1; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < N; ++i)
            if (ds.labels[i] == cls) members.push_back(i);
        split_rng.shuffle(members);
        const auto take = std::min<std::size_t>(
            members.size(), std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                         cfg.label_fraction * static_cast<double>(members.size())))));
        for (std::size_t k = 0; k < take; ++k) ds.labeled[members[k]] = true;
    }

    // Claims.
    Rng claim_rng(stage_seed(cfg.seed, "sim-claims"));
    static const char* kSpecialties[] = {"Family Practice", "Internal Medicine", "Nurse Practitioner"};
    std::vector<double> alpha(D, cfg.concentration);
    for (std::size_t d = 0; d < opioid_first + cfg.n_opioids; ++d) alpha[d] = cfg.concentration * cfg.focus;

    auto& table = ds.claims;
    for (const auto& g : ds.drugs) table.drugs.add(g.name);
    for (std::size_t i = 0; i < N; ++i) {
        table.prescribers.add(sim_npi(i));
        table.specialty.push_back(kSpecialties[claim_rng.index(3)]);
        const double volume = cfg.mean_volume * claim_rng.gamma(2.0) / 2.0;
        for (std::size_t y = 0; y < cfg.n_years; ++y) {
            const int year = cfg.first_year + static_cast<int>(y);
            std::vector<double> shares = claim_rng.dirichlet(alpha);
            if (ds.scenario[i] == kScenarioCost) {
                const auto k = static_cast<std::size_t>(ds.planted_rule[i]);
                shift_pair(shares, 2 * k, 2 * k + 1, cfg.beta);
            } else if (ds.scenario[i] == kScenarioOpioid) {
                boost_drugs(shares, opioid_first, cfg.n_opioids, cfg.beta);
            }
            const auto trials =
                static_cast<std::size_t>(std::max(20.0, std::round(volume * claim_rng.uniform(0.8, 1.2))));
            const auto counts = multinomial(claim_rng, trials, shares);
            for (std::size_t d = 0; d < D; ++d) {
                if (counts[d] == 0) continue;
                const auto& g = ds.drugs[d];
                const double clm = static_cast<double>(counts[d]);
                ClaimRecord rec;
                rec.prescriber = i;
                rec.year = year;
                rec.drug = d;
                rec.metrics[0] = clm;
                rec.metrics[1] = std::round(clm * g.fill_ratio);
                rec.metrics[2] = std::round(rec.metrics[1] * g.days_per_fill);
                rec.metrics[3] = std::round(clm * g.price * claim_rng.uniform(0.9, 1.1));
                rec.metrics[4] = std::max(1.0, std::round(clm * g.bene_ratio));
                table.records.push_back(rec);
            }
            table.years.insert(year);
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

enum class LabelSubset { all, labeled, unlabeled };

inline std::string sim_labels_csv(const SimDataset& ds, LabelSubset subset = LabelSubset::all) {
    std::string out = "npi,label\n";
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (subset == LabelSubset::labeled && !ds.labeled[i]) continue;
        if (subset == LabelSubset::unlabeled && ds.labeled[i]) continue;
        out += sim_npi(i) + "," + std::to_string(ds.labels[i]) + "\n";
    }
    return out;
}

inline std::string sim_targets_csv(const SimDataset& ds) {
    std::string out = "drug,target\n";
    for (const auto& g : ds.drugs)
        for (const auto& t : g.targets) out += g.name + "," + t + "\n";
    return out;
}

inline std::string sim_opioids_csv(const SimDataset& ds) {
    std::string out = "drug,likelihood,weight\n";
    for (const auto& g : ds.drugs)
        if (g.opioid) out += g.name + ",high," + format_double(ds.config.opioid_weight) + "\n";
    return out;
}

inline Json to_json(const SimConfig& c) {
    Json j = Json::object();
    j["n_providers"] = c.n_providers;
    j["n_drugs"] = c.n_drugs;
    j["n_years"] = c.n_years;
    j["fraud_rate"] = c.fraud_rate;
    j["scenario_mix"] = c.scenario_mix;
    j["beta"] = c.beta;
    j["seed"] = c.seed;
    j["concentration"] = c.concentration;
    j["focus"] = c.focus;
    j["n_pairs"] = c.n_pairs;
    j["n_opioids"] = c.n_opioids;
    j["mean_volume"] = c.mean_volume;
    j["label_fraction"] = c.label_fraction;
    j["opioid_weight"] = c.opioid_weight;
    j["first_year"] = c.first_year;
    return j;
}

inline Json sim_ground_truth_json(const SimDataset& ds) {
    Json j = Json::object();
    j["config"] = to_json(ds.config);
    Json rules = Json::array();
    for (const auto& r : ds.rules) {
        Json jr = Json::object();
        jr["kind"] = std::string(to_string(r.kind));
        jr["p"] = r.p;
        jr["q"] = r.q;
        jr["weight"] = r.weight;
        jr["tier"] = r.tier;
        rules.push_back(std::move(jr));
    }
    j["planted_rules"] = std::move(rules);
    Json drugs = Json::array();
    for (const auto& g : ds.drugs) {
        Json jd = Json::object();
        jd["name"] = g.name;
        jd["price"] = g.price;
        jd["opioid"] = g.opioid;
        drugs.push_back(std::move(jd));
    }
    j["drugs"] = std::move(drugs);
    Json frauds = Json::array();
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (!ds.labels[i]) continue;
        Json jf = Json::object();
        jf["npi"] = sim_npi(i);
        jf["scenario"] = ds.scenario[i];
        if (ds.planted_rule[i] >= 0) jf["rule"] = ds.planted_rule[i];
        jf["labeled"] = static_cast<bool>(ds.labeled[i]);
        frauds.push_back(std::move(jf));
    }
    j["frauds"] = std::move(frauds);
    return j;
}

}  // namespace clevercatch
