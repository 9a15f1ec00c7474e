// clevercatch/rules.hpp
// Weighted unary/binary domain rules over a drug vocabulary, their CSV form,
// and the offline derivation of cost-preference and opioid rules.
#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/io.hpp"

namespace clevercatch {

// Ordered drug names; index order is first-appearance order of the source.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(const std::vector<std::string>& names) {
        for (const auto& n : names) {
            if (index_.count(n)) throw ContractError("vocabulary: duplicate drug '" + n + "'");
            add(n);
        }
    }

    std::size_t add(const std::string& name) {
        auto [it, inserted] = index_.emplace(name, names_.size());
        if (inserted) names_.push_back(name);
        return it->second;
    }

    std::optional<std::size_t> find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    bool operator==(const Vocabulary& o) const { return names_ == o.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class RuleKind { binary, unary };

inline std::string_view to_string(RuleKind k) { return k == RuleKind::binary ? "binary" : "unary"; }

struct Rule {
    RuleKind kind = RuleKind::binary;
    std::size_t p = 0;
    std::optional<std::size_t> q;  // empty for unary rules
    double weight = 0.0;

    bool operator==(const Rule&) const = default;
};

// A rule by drug name, before it is bound to a vocabulary.
struct RuleSpec {
    RuleKind kind = RuleKind::binary;
    std::string p;
    std::string q;  // empty for unary
    double weight = 0.0;
    std::string tier;  // derivation tier, informational only
    std::size_t line = 0;  // source line when parsed from a file
};

class RuleSet {
public:
    RuleSet() = default;

    RuleSet(std::vector<Rule> rules, Vocabulary vocabulary)
        : rules_(std::move(rules)), vocab_(std::move(vocabulary)) {
        validate();
    }

    static RuleSet from_specs(const std::vector<RuleSpec>& specs, const Vocabulary& vocab,
                              const std::string& source = "rules") {
        std::vector<Rule> rules;
        rules.reserve(specs.size());
        for (std::size_t k = 0; k < specs.size(); ++k)
            rules.push_back(resolve(specs[k], vocab, source, specs[k].line ? specs[k].line : k + 1));
        return RuleSet(std::move(rules), vocab);
    }

    std::size_t size() const noexcept { return rules_.size(); }
    const Rule& operator[](std::size_t j) const { return rules_.at(j); }
    const std::vector<Rule>& rules() const noexcept { return rules_; }
    const Vocabulary& vocabulary() const noexcept { return vocab_; }

    std::vector<double> weights() const {
        std::vector<double> w;
        w.reserve(rules_.size());
        for (const auto& r : rules_) w.push_back(r.weight);
        return w;
    }

    std::size_t count(RuleKind kind) const {
        return static_cast<std::size_t>(
            std::count_if(rules_.begin(), rules_.end(), [&](const Rule& r) { return r.kind == kind; }));
    }

    // Every rule not of `kind`, in original order. Throws if nothing remains.
    RuleSet without(RuleKind kind) const {
        std::vector<Rule> kept;
        for (const auto& r : rules_)
            if (r.kind != kind) kept.push_back(r);
        return RuleSet(std::move(kept), vocab_);
    }

    std::string describe(std::size_t j) const {
        const Rule& r = rules_.at(j);
        std::string s(to_string(r.kind));
        s += "(" + vocab_.name(r.p);
        if (r.q) s += "," + vocab_.name(*r.q);
        return s + ")";
    }

    bool operator==(const RuleSet& o) const { return rules_ == o.rules_ && vocab_ == o.vocab_; }

    static Rule resolve(const RuleSpec& spec, const Vocabulary& vocab, const std::string& source, std::size_t line) {
        const std::string where = source + ":" + std::to_string(line);
        Rule r;
        r.kind = spec.kind;
        r.weight = spec.weight;
        const auto p = vocab.find(spec.p);
        if (!p) throw ParseError(where + ": unknown drug '" + spec.p + "'");
        r.p = *p;
        if (spec.kind == RuleKind::binary) {
            if (spec.q.empty()) throw ParseError(where + ": binary rule needs drug_q");
            const auto q = vocab.find(spec.q);
            if (!q) throw ParseError(where + ": unknown drug '" + spec.q + "'");
            r.q = *q;
        } else if (!spec.q.empty()) {
            throw ParseError(where + ": unary rule must leave drug_q empty");
        }
        return r;
    }

private:
    void validate() const {
        if (rules_.empty()) throw ContractError("rule set is empty");
        std::set<std::tuple<int, std::size_t, std::size_t>> seen;
        for (std::size_t j = 0; j < rules_.size(); ++j) {
            const Rule& r = rules_[j];
            const std::string where = "rule " + std::to_string(j + 1);
            if (!(r.weight >= 0.0 && r.weight <= 1.0))
                throw ContractError(where + ": weight out of range [0,1]: " + format_double(r.weight));
            if (r.p >= vocab_.size()) throw ContractError(where + ": drug index out of vocabulary");
            if (r.kind == RuleKind::binary) {
                if (!r.q) throw ContractError(where + ": binary rule without comparator");
                if (*r.q >= vocab_.size()) throw ContractError(where + ": drug index out of vocabulary");
                if (*r.q == r.p) throw ContractError(where + ": binary rule with p = q");
            } else if (r.q) {
                throw ContractError(where + ": unary rule with comparator");
            }
            const auto key = std::make_tuple(static_cast<int>(r.kind), r.p, r.q.value_or(SIZE_MAX));
            if (!seen.insert(key).second) throw ContractError(where + ": duplicate rule " + describe(j));
        }
    }

    std::vector<Rule> rules_;
    Vocabulary vocab_;
};

inline const std::vector<std::string>& rules_csv_header() {
    static const std::vector<std::string> h{"kind", "drug_p", "drug_q", "weight"};
    return h;
}

inline std::vector<RuleSpec> parse_rule_specs_text(const std::string& text, const std::string& source) {
    const CsvTable t = parse_csv_text(text, source, rules_csv_header());
    std::vector<RuleSpec> specs;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        const std::string where = source + ":" + std::to_string(t.line_numbers[k]);
        RuleSpec s;
        s.line = t.line_numbers[k];
        if (row[0] == "binary") s.kind = RuleKind::binary;
        else if (row[0] == "unary") s.kind = RuleKind::unary;
        else throw ParseError(where + ": unknown rule kind '" + row[0] + "'");
        s.p = row[1];
        s.q = row[2];
        s.weight = parse_double(row[3], where);
        if (!(s.weight >= 0.0 && s.weight <= 1.0))
            throw ParseError(where + ": weight out of range [0,1]: " + row[3]);
        if (s.kind == RuleKind::binary && s.p == s.q) throw ParseError(where + ": binary rule with p = q");
        specs.push_back(std::move(s));
    }
    return specs;
}

inline RuleSet parse_rules_text(const std::string& text, const Vocabulary& vocab, const std::string& source = "rules") {
    const auto specs = parse_rule_specs_text(text, source);
    std::vector<Rule> rules;
    std::set<std::tuple<int, std::size_t, std::size_t>> seen;
    for (const auto& spec : specs) {
        Rule r = RuleSet::resolve(spec, vocab, source, spec.line);
        const auto key = std::make_tuple(static_cast<int>(r.kind), r.p, r.q.value_or(SIZE_MAX));
        if (!seen.insert(key).second)
            throw ParseError(source + ":" + std::to_string(spec.line) + ": duplicate rule");
        rules.push_back(r);
    }
    if (rules.empty()) throw ParseError(source + ": no rules");
    return RuleSet(std::move(rules), vocab);
}

inline RuleSet parse_rules(const std::filesystem::path& path, const Vocabulary& vocab) {
    return parse_rules_text(read_text(path), vocab, path.string());
}

inline std::string serialize_rule_specs(const std::vector<RuleSpec>& specs) {
    std::string out = "kind,drug_p,drug_q,weight\n";
    for (const auto& s : specs) {
        out += std::string(to_string(s.kind)) + "," + csv_escape(s.p) + "," + csv_escape(s.q) + "," +
               format_double(s.weight) + "\n";
    }
    return out;
}

inline std::string serialize_rules(const RuleSet& rs) {
    std::vector<RuleSpec> specs;
    for (const auto& r : rs.rules()) {
        RuleSpec s;
        s.kind = r.kind;
        s.p = rs.vocabulary().name(r.p);
        s.q = r.q ? rs.vocabulary().name(*r.q) : "";
        s.weight = r.weight;
        specs.push_back(std::move(s));
    }
    return serialize_rule_specs(specs);
}

// Hash of the canonical rule serialization, including how each rule binds
// into the vocabulary (names, indices, and vocabulary size).
inline std::string fingerprint(const RuleSet& rs) {
    std::string canon = "D=" + std::to_string(rs.vocabulary().size()) + "\n";
    for (const auto& r : rs.rules()) {
        canon += std::string(to_string(r.kind)) + "," + rs.vocabulary().name(r.p) + "#" + std::to_string(r.p) + ",";
        if (r.q) canon += rs.vocabulary().name(*r.q) + "#" + std::to_string(*r.q);
        canon += "," + format_double(r.weight) + "\n";
    }
    return content_hash(canon);
}

// ---------------------------------------------------------------------------
// Rule derivation
// ---------------------------------------------------------------------------

using TargetSet = std::set<std::string>;
using DrugTargetMap = std::map<std::string, TargetSet>;

inline double jaccard(const TargetSet& a, const TargetSet& b) {
    if (a.empty() || b.empty()) throw ContractError("jaccard: similarity undefined for an empty target set");
    std::size_t inter = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else {
            ++inter;
            ++ia;
            ++ib;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline DrugTargetMap parse_drug_targets(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path, {"drug", "target"});
    DrugTargetMap map;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        if (row[0].empty() || row[1].empty())
            throw ParseError(path.string() + ":" + std::to_string(t.line_numbers[k]) + ": empty drug or target");
        map[row[0]].insert(row[1]);
    }
    return map;
}

struct PriceStats {
    double total_cost = 0.0;
    double total_claims = 0.0;
};

struct GapThresholds {
    double moderate = 0.5;
    double high = 1.0;
    double extreme = 2.0;
};

// Interchangeable pairs (identical target sets) whose average cost per claim
// differs by at least the moderate relative gap. p is the costlier drug.
inline std::vector<RuleSpec> derive_cost_preference_rules(const DrugTargetMap& targets,
                                                          const std::map<std::string, PriceStats>& prices,
                                                          const GapThresholds& thresholds,
                                                          std::vector<std::string>* warnings = nullptr) {
    if (!(thresholds.moderate > 0.0 && thresholds.moderate <= thresholds.high &&
          thresholds.high <= thresholds.extreme))
        throw ConfigError("gap thresholds must satisfy 0 < moderate <= high <= extreme");
    std::vector<RuleSpec> out;
    std::vector<std::string> drugs;
    for (const auto& [name, set] : targets)
        if (!set.empty()) drugs.push_back(name);
    for (std::size_t a = 0; a < drugs.size(); ++a) {
        for (std::size_t b = a + 1; b < drugs.size(); ++b) {
            if (jaccard(targets.at(drugs[a]), targets.at(drugs[b])) != 1.0) continue;
            const auto pa = prices.find(drugs[a]);
            const auto pb = prices.find(drugs[b]);
            if (pa == prices.end() || pb == prices.end() || !(pa->second.total_claims > 0.0) ||
                !(pb->second.total_claims > 0.0)) {
                if (warnings) warnings->push_back("missing price stats for pair " + drugs[a] + "/" + drugs[b]);
                continue;
            }
            const double ca = pa->second.total_cost / pa->second.total_claims;
            const double cb = pb->second.total_cost / pb->second.total_claims;
            if (ca == cb) continue;
            const bool a_costlier = ca > cb;
            const double hi = a_costlier ? ca : cb;
            const double lo = a_costlier ? cb : ca;
            if (!(lo > 0.0)) {
                if (warnings) warnings->push_back("non-positive cost per claim in pair " + drugs[a] + "/" + drugs[b]);
                continue;
            }
            const double gap = (hi - lo) / lo;
            if (gap < thresholds.moderate) continue;
            RuleSpec s;
            s.kind = RuleKind::binary;
            s.p = a_costlier ? drugs[a] : drugs[b];
            s.q = a_costlier ? drugs[b] : drugs[a];
            s.weight = std::min(1.0, gap / thresholds.extreme);
            s.tier = gap >= thresholds.extreme ? "extreme" : gap >= thresholds.high ? "high" : "moderate";
            out.push_back(std::move(s));
        }
    }
    return out;
}

struct OpioidAnnotation {
    std::string drug;
    bool high = false;
    std::optional<double> weight;
};

inline std::vector<OpioidAnnotation> parse_opioid_annotations(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    const std::string source = path.string();
    CsvTable t = parse_csv_text(text, source, {"drug", "likelihood"}, true);
    const bool has_weight = t.header.size() >= 3;
    if (has_weight && (t.header.size() != 3 || t.header[2] != "weight"))
        throw ParseError(source + ": expected header 'drug,likelihood[,weight]'");
    std::vector<OpioidAnnotation> out;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        const std::string where = source + ":" + std::to_string(t.line_numbers[k]);
        OpioidAnnotation a;
        a.drug = row[0];
        if (row[1] == "high") a.high = true;
        else if (row[1] == "low") a.high = false;
        else throw ParseError(where + ": unknown likelihood '" + row[1] + "'");
        if (has_weight && !row[2].empty()) {
            a.weight = parse_double(row[2], where);
            if (!(*a.weight >= 0.0 && *a.weight <= 1.0)) throw ParseError(where + ": weight out of range [0,1]");
        }
        out.push_back(std::move(a));
    }
    return out;
}

inline std::vector<RuleSpec> derive_opioid_rules(const std::vector<OpioidAnnotation>& annotations,
                                                 double default_weight = 0.5) {
    std::vector<RuleSpec> out;
    for (const auto& a : annotations) {
        if (!a.high) continue;
        RuleSpec s;
        s.kind = RuleKind::unary;
        s.p = a.drug;
        s.weight = a.weight.value_or(default_weight);
        s.tier = "opioid";
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace clevercatch
