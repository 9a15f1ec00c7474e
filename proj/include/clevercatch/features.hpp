// clevercatch/features.hpp
// Rule-contrast features: prescriber-year shares per channel, per-rule share
// contrasts, and min/mean/max summaries over each prescriber's observed years.
//
// Layout of one row (full mode): for rule j, channel m, stat s the column is
//   15*j + 3*m + s,   m in {clm, fill30, days, cost, bene}, s in {min, mean, max}
// and is named rule{j+1}_{channel}_{stat}.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/ingest.hpp"
#include "clevercatch/io.hpp"
#include "clevercatch/matrix.hpp"
#include "clevercatch/parallel.hpp"
#include "clevercatch/rules.hpp"

namespace clevercatch {

using ChannelValues = std::array<double, kChannels>;

struct PrescriberYearShares {
    int year = 0;
    std::map<std::size_t, ChannelValues> shares;  // drug -> share per channel

    double share(std::size_t drug, std::size_t channel) const {
        auto it = shares.find(drug);
        return it == shares.end() ? 0.0 : it->second[channel];
    }
};

struct ShareTable {
    // by_prescriber[i] holds prescriber i's observed years in ascending order.
    std::vector<std::vector<PrescriberYearShares>> by_prescriber;

    const PrescriberYearShares& at(std::size_t prescriber, int year) const {
        for (const auto& py : by_prescriber.at(prescriber))
            if (py.year == year) return py;
        throw ContractError("share table: prescriber " + std::to_string(prescriber) + " has no year " +
                            std::to_string(year));
    }
};

inline ShareTable compute_shares(const ClaimsTable& claims) {
    std::vector<std::map<int, std::map<std::size_t, ChannelValues>>> totals(claims.prescribers.size());
    for (const auto& r : claims.records) {
        auto& cell = totals.at(r.prescriber)[r.year][r.drug];
        for (std::size_t m = 0; m < kChannels; ++m) cell[m] += r.metrics[m];
    }
    ShareTable table;
    table.by_prescriber.resize(totals.size());
    for (std::size_t i = 0; i < totals.size(); ++i) {
        for (auto& [year, drugs] : totals[i]) {
            ChannelValues denom{};
            for (const auto& [d, tot] : drugs)
                for (std::size_t m = 0; m < kChannels; ++m) denom[m] += tot[m];
            PrescriberYearShares py;
            py.year = year;
            for (const auto& [d, tot] : drugs) {
                ChannelValues s{};
                for (std::size_t m = 0; m < kChannels; ++m) s[m] = denom[m] > 0.0 ? tot[m] / denom[m] : 0.0;
                py.shares.emplace(d, s);
            }
            table.by_prescriber[i].push_back(std::move(py));
        }
    }
    return table;
}

// share(p) - share(q) per channel; unary rules compare against zero.
inline ChannelValues rule_contrast(const PrescriberYearShares& py, const Rule& rule) {
    ChannelValues out{};
    for (std::size_t m = 0; m < kChannels; ++m) {
        const double sq = rule.q ? py.share(*rule.q, m) : 0.0;
        out[m] = py.share(rule.p, m) - sq;
    }
    return out;
}

inline ChannelValues rule_contrast(const ShareTable& shares, const Rule& rule, std::size_t prescriber, int year) {
    return rule_contrast(shares.at(prescriber, year), rule);
}

struct YearSummary {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

inline YearSummary aggregate_over_years(std::span<const double> per_year) {
    if (per_year.empty()) throw ContractError("aggregate_over_years: no observed years");
    YearSummary s{per_year[0], 0.0, per_year[0]};
    double sum = 0.0;
    for (double v : per_year) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        sum += v;
    }
    s.mean = sum / static_cast<double>(per_year.size());
    return s;
}

enum class FeatureMode { full, mean_claims_only };

inline std::string_view to_string(FeatureMode m) {
    return m == FeatureMode::full ? "full" : "mean-claims-only";
}

inline FeatureMode feature_mode_from_string(std::string_view s) {
    if (s == "full") return FeatureMode::full;
    if (s == "mean-claims-only") return FeatureMode::mean_claims_only;
    throw ConfigError("unknown feature channels mode '" + std::string(s) + "'");
}

inline constexpr std::array<const char*, 3> kStatNames{"min", "mean", "max"};

inline std::size_t feature_width(std::size_t rules, FeatureMode mode = FeatureMode::full) {
    return mode == FeatureMode::full ? 15 * rules : rules;
}

inline std::vector<std::string> feature_column_names(std::size_t rules, FeatureMode mode = FeatureMode::full) {
    std::vector<std::string> names;
    names.reserve(feature_width(rules, mode));
    for (std::size_t j = 0; j < rules; ++j) {
        const std::string prefix = "rule" + std::to_string(j + 1) + "_";
        if (mode == FeatureMode::mean_claims_only) {
            names.push_back(prefix + "clm_mean");
            continue;
        }
        for (std::size_t m = 0; m < kChannels; ++m)
            for (const char* stat : kStatNames) names.push_back(prefix + kChannelNames[m] + "_" + stat);
    }
    return names;
}

struct FeatureMatrix {
    std::vector<std::string> npis;  // row order = ingest prescriber order
    std::vector<std::string> columns;
    Matrix values;
    FeatureMode mode = FeatureMode::full;

    std::size_t rows() const noexcept { return values.rows(); }
    std::size_t cols() const noexcept { return values.cols(); }
};

inline void fill_feature_row(const std::vector<PrescriberYearShares>& years, const RuleSet& rules, FeatureMode mode,
                             std::span<double> row) {
    if (years.empty()) throw ContractError("feature row: prescriber has no observed years");
    std::vector<ChannelValues> per_year(years.size());
    std::vector<double> series(years.size());
    for (std::size_t j = 0; j < rules.size(); ++j) {
        for (std::size_t t = 0; t < years.size(); ++t) per_year[t] = rule_contrast(years[t], rules[j]);
        if (mode == FeatureMode::mean_claims_only) {
            for (std::size_t t = 0; t < years.size(); ++t) series[t] = per_year[t][0];
            row[j] = aggregate_over_years(series).mean;
            continue;
        }
        for (std::size_t m = 0; m < kChannels; ++m) {
            for (std::size_t t = 0; t < years.size(); ++t) series[t] = per_year[t][m];
            const YearSummary s = aggregate_over_years(series);
            const std::size_t base = 15 * j + 3 * m;
            row[base + 0] = s.min;
            row[base + 1] = s.mean;
            row[base + 2] = s.max;
        }
    }
}

inline FeatureMatrix build_feature_matrix(const ClaimsTable& claims, const RuleSet& rules,
                                          FeatureMode mode = FeatureMode::full) {
    if (!(rules.vocabulary() == claims.drugs))
        throw ContractError("build_feature_matrix: rule set is bound to a different drug vocabulary");
    const ShareTable shares = compute_shares(claims);
    FeatureMatrix fm;
    fm.mode = mode;
    fm.npis = claims.prescribers.npis();
    fm.columns = feature_column_names(rules.size(), mode);
    fm.values = Matrix(claims.prescribers.size(), fm.columns.size());
    parallel_for(claims.prescribers.size(),
                 [&](std::size_t i) { fill_feature_row(shares.by_prescriber[i], rules, mode, fm.values.row(i)); });
    return fm;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string features_to_csv(const FeatureMatrix& fm) {
    std::string out = "npi";
    for (const auto& c : fm.columns) out += "," + c;
    out += "\n";
    for (std::size_t i = 0; i < fm.rows(); ++i) {
        out += csv_escape(fm.npis[i]);
        for (double v : fm.values.row(i)) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

inline FeatureMatrix features_from_csv(const std::string& text, const std::string& source = "features") {
    const CsvTable t = parse_csv_text(text, source, {"npi"}, true);
    FeatureMatrix fm;
    fm.columns.assign(t.header.begin() + 1, t.header.end());
    const std::size_t cols = fm.columns.size();
    if (cols > 0 && fm.columns.front().size() > 9 &&
        fm.columns.front().compare(fm.columns.front().size() - 9, 9, "_clm_mean") == 0)
        fm.mode = FeatureMode::mean_claims_only;
    std::vector<double> data;
    data.reserve(t.rows.size() * cols);
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        fm.npis.push_back(t.rows[k][0]);
        const std::string where = source + ":" + std::to_string(t.line_numbers[k]);
        for (std::size_t c = 0; c < cols; ++c) data.push_back(parse_double(t.rows[k][c + 1], where));
    }
    fm.values = Matrix(t.rows.size(), cols, std::move(data));
    return fm;
}

inline constexpr char kFeatureMagic[5] = {'C', 'C', 'F', 'M', '1'};

namespace detail {
inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return v;
}
}  // namespace detail

// "CCFM1", rows and cols as u64 LE, then row-major f64 LE.
inline std::string features_to_binary(const Matrix& m) {
    std::string out(kFeatureMagic, sizeof kFeatureMagic);
    detail::put_u64_le(out, m.rows());
    detail::put_u64_le(out, m.cols());
    for (double v : m.values()) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

inline Matrix features_from_binary(std::string_view bytes) {
    constexpr std::size_t head = sizeof kFeatureMagic + 16;
    if (bytes.size() < head || std::memcmp(bytes.data(), kFeatureMagic, sizeof kFeatureMagic) != 0)
        throw ParseError("feature container: bad magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint64_t rows = detail::get_u64_le(p + 5);
    const std::uint64_t cols = detail::get_u64_le(p + 13);
    if (cols != 0 && rows > (bytes.size() - head) / 8 / cols)
        throw ParseError("feature container: truncated payload");
    if (bytes.size() != head + rows * cols * 8) throw ParseError("feature container: payload size mismatch");
    std::vector<double> data(rows * cols);
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = std::bit_cast<double>(detail::get_u64_le(p + head + 8 * k));
    return Matrix(rows, cols, std::move(data));
}

}  // namespace clevercatch
