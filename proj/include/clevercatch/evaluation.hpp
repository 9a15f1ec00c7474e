// clevercatch/evaluation.hpp
// Ranking and threshold metrics over (score, label) pairs.
//
// Ranking is by descending score with ties broken by ascending index.
// Average precision treats a run of tied scores as one threshold: every
// positive inside the run gets the precision measured at the end of the run.
// The result is the correctly rounded value of that rational for any
// realistic n.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "clevercatch/detector.hpp"
#include "clevercatch/error.hpp"
#include "clevercatch/io.hpp"

namespace clevercatch {

// Correctly rounded sum of finite doubles (Shewchuk partials), independent of
// summation order.
inline double exact_sum(std::span<const double> xs) {
    std::vector<double> partials;
    for (double x : xs) {
        std::size_t i = 0;
        for (double y : partials) {
            if (std::abs(x) < std::abs(y)) std::swap(x, y);
            const double hi = x + y;
            const double lo = y - (hi - x);
            if (lo != 0.0) partials[i++] = lo;
            x = hi;
        }
        partials.resize(i);
        partials.push_back(x);
    }
    if (partials.empty()) return 0.0;
    // Round the partials to a single double, handling the half-way case.
    std::size_t n = partials.size();
    double hi = partials[--n];
    double lo = 0.0;
    while (n > 0) {
        const double x = hi;
        const double y = partials[--n];
        hi = x + y;
        const double yr = hi - x;
        lo = y - yr;
        if (lo != 0.0) break;
    }
    if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
        const double y = lo * 2.0;
        const double x = hi + y;
        if (y == x - hi) hi = x;
    }
    return hi;
}

inline void check_eval_input(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeError("evaluation: scores and labels differ in length");
    for (int y : labels)
        if (y != 0 && y != 1) throw ContractError("evaluation: labels must be 0 or 1");
}

inline std::size_t count_positives(std::span<const int> labels) {
    std::size_t p = 0;
    for (int y : labels) p += y == 1;
    return p;
}

inline double pr_auc(std::span<const double> scores, std::span<const int> labels) {
    check_eval_input(scores, labels);
    const std::size_t positives = count_positives(labels);
    if (positives == 0) throw ContractError("pr_auc: undefined without positive labels");
    const auto order = rank_order(scores);
    std::vector<double> terms;
    terms.reserve(positives);
    std::size_t seen = 0, hits = 0;
    for (std::size_t start = 0; start < order.size();) {
        std::size_t stop = start;
        std::size_t group_hits = 0;
        while (stop < order.size() && scores[order[stop]] == scores[order[start]]) group_hits += labels[order[stop++]] == 1;
        seen += stop - start;
        hits += group_hits;
        if (group_hits > 0) {
            // group_hits * hits / seen as a quotient plus its rounding residual.
            const auto num = static_cast<double>(group_hits * hits);
            const auto den = static_cast<double>(seen);
            const double q = num / den;
            terms.push_back(q);
            terms.push_back(std::fma(-q, den, num) / den);
        }
        start = stop;
    }
    // Sum as hi + lo, then divide by P with one final rounding.
    const double hi = exact_sum(terms);
    terms.push_back(-hi);
    const double lo = exact_sum(terms);
    const auto p = static_cast<double>(positives);
    const double q = hi / p;
    return q + (std::fma(-q, p, hi) + lo) / p;
}

inline double recall_at_k(std::span<const double> scores, std::span<const int> labels, std::size_t k) {
    check_eval_input(scores, labels);
    if (k < 1 || k > scores.size())
        throw ContractError("recall_at_k: K=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
    const std::size_t positives = count_positives(labels);
    if (positives == 0) throw ContractError("recall_at_k: undefined without positive labels");
    const auto order = rank_order(scores);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < k; ++r) hits += labels[order[r]] == 1;
    return static_cast<double>(hits) / static_cast<double>(positives);
}

struct PrfResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t flagged = 0;
    std::size_t true_positives = 0;
};

// Flag = score > threshold. precision = 0 when nothing is flagged, f1 = 0 when p + r = 0.
inline PrfResult prf_at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold) {
    check_eval_input(scores, labels);
    PrfResult r;
    const std::size_t positives = count_positives(labels);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > threshold) {
            ++r.flagged;
            r.true_positives += labels[i] == 1;
        }
    }
    const auto tp = static_cast<double>(r.true_positives);
    r.precision = r.flagged ? tp / static_cast<double>(r.flagged) : 0.0;
    r.recall = positives ? tp / static_cast<double>(positives) : 0.0;
    // 2pr/(p+r) reduces to 2tp/(flagged+positives); zero exactly when tp = 0.
    r.f1 = r.true_positives ? 2.0 * tp / static_cast<double>(r.flagged + positives) : 0.0;
    return r;
}

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

// One point per distinct score, thresholds descending (flag = score >= threshold).
inline std::vector<PrPoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
    check_eval_input(scores, labels);
    const std::size_t positives = count_positives(labels);
    const auto order = rank_order(scores);
    std::vector<PrPoint> curve;
    std::size_t seen = 0, hits = 0;
    for (std::size_t start = 0; start < order.size();) {
        std::size_t stop = start;
        while (stop < order.size() && scores[order[stop]] == scores[order[start]]) hits += labels[order[stop++]] == 1;
        seen += stop - start;
        curve.push_back({scores[order[start]], static_cast<double>(hits) / static_cast<double>(seen),
                         positives ? static_cast<double>(hits) / static_cast<double>(positives) : 0.0});
        start = stop;
    }
    return curve;
}

inline std::string pr_curve_to_csv(const std::vector<PrPoint>& curve) {
    std::string out = "threshold,precision,recall\n";
    for (const auto& p : curve)
        out += format_double(p.threshold) + "," + format_double(p.precision) + "," + format_double(p.recall) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Report rows
// ---------------------------------------------------------------------------

inline const std::vector<std::size_t>& default_k_list() {
    static const std::vector<std::size_t> ks{10, 20, 50, 100};
    return ks;
}

struct EvalReport {
    std::string config;
    std::uint64_t seed = 0;
    double pr_auc = 0.0;
    std::vector<std::size_t> ks;
    std::vector<double> recall_at;  // NaN when K exceeds the evaluated set
    PrfResult prf;
};

inline EvalReport evaluate(std::span<const double> scores, std::span<const int> labels,
                           const std::vector<std::size_t>& ks, double threshold, std::string config = "",
                           std::uint64_t seed = 0) {
    EvalReport rep;
    rep.config = std::move(config);
    rep.seed = seed;
    rep.pr_auc = pr_auc(scores, labels);
    rep.ks = ks;
    for (std::size_t k : ks)
        rep.recall_at.push_back(k >= 1 && k <= scores.size() ? recall_at_k(scores, labels, k)
                                                             : std::numeric_limits<double>::quiet_NaN());
    rep.prf = prf_at_threshold(scores, labels, threshold);
    return rep;
}

inline std::string report_header(const std::vector<std::size_t>& ks) {
    std::string h = "config,seed,pr_auc";
    for (std::size_t k : ks) h += ",r@" + std::to_string(k);
    return h + ",precision,recall,f1";
}

inline std::string report_row(const EvalReport& r) {
    std::string row = csv_escape(r.config) + "," + std::to_string(r.seed) + "," + format_double(r.pr_auc);
    for (double v : r.recall_at) row += "," + (std::isnan(v) ? std::string() : format_double(v));
    row += "," + format_double(r.prf.precision) + "," + format_double(r.prf.recall) + "," + format_double(r.prf.f1);
    return row;
}

inline std::string reports_to_csv(const std::vector<EvalReport>& reports, const std::vector<std::size_t>& ks) {
    std::string out = "# r@K denominator: all positive labels in the evaluated set\n";
    out += report_header(ks) + "\n";
    for (const auto& r : reports) out += report_row(r) + "\n";
    return out;
}

}  // namespace clevercatch
