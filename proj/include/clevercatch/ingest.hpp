// clevercatch/ingest.hpp
// Claims and label tables.
#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "clevercatch/error.hpp"
#include "clevercatch/io.hpp"
#include "clevercatch/rules.hpp"

namespace clevercatch {

inline constexpr std::size_t kChannels = 5;

enum class Channel : std::size_t { clm = 0, fill30 = 1, days = 2, cost = 3, bene = 4 };

inline constexpr std::array<const char*, kChannels> kChannelNames{"clm", "fill30", "days", "cost", "bene"};

struct ClaimRecord {
    std::size_t prescriber = 0;  // index into ClaimsTable::prescribers
    int year = 0;
    std::size_t drug = 0;        // index into ClaimsTable::drugs
    std::array<double, kChannels> metrics{};  // clm, fill30, days, cost, bene
};

class PrescriberIndex {
public:
    std::size_t add(const std::string& npi) {
        auto [it, inserted] = index_.emplace(npi, npis_.size());
        if (inserted) npis_.push_back(npi);
        return it->second;
    }
    std::optional<std::size_t> find(const std::string& npi) const {
        auto it = index_.find(npi);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t size() const noexcept { return npis_.size(); }
    const std::string& npi(std::size_t i) const { return npis_.at(i); }
    const std::vector<std::string>& npis() const noexcept { return npis_; }

private:
    std::vector<std::string> npis_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ClaimsTable {
    std::vector<ClaimRecord> records;
    Vocabulary drugs;
    PrescriberIndex prescribers;
    std::set<int> years;
    std::vector<std::string> specialty;  // first specialty seen, per prescriber
    std::vector<std::string> warnings;

    // Column sums over all records, per channel.
    std::array<double, kChannels> totals() const {
        std::array<double, kChannels> t{};
        for (const auto& r : records)
            for (std::size_t m = 0; m < kChannels; ++m) t[m] += r.metrics[m];
        return t;
    }

    std::map<std::string, PriceStats> price_stats() const {
        std::map<std::string, PriceStats> out;
        for (const auto& r : records) {
            auto& ps = out[drugs.name(r.drug)];
            ps.total_cost += r.metrics[static_cast<std::size_t>(Channel::cost)];
            ps.total_claims += r.metrics[static_cast<std::size_t>(Channel::clm)];
        }
        return out;
    }
};

inline const std::vector<std::string>& claims_csv_header() {
    static const std::vector<std::string> h{"npi",        "year",
                                            "specialty",  "drug",
                                            "total_claims", "total_30day_fills",
                                            "total_day_supply", "total_cost",
                                            "total_beneficiaries"};
    return h;
}

inline ClaimsTable parse_claims_text(const std::string& text, const std::string& source = "claims") {
    const CsvTable t = parse_csv_text(text, source, claims_csv_header());
    ClaimsTable table;
    std::map<std::tuple<std::size_t, int, std::size_t>, std::size_t> seen;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        const std::string where = source + ":" + std::to_string(t.line_numbers[k]);
        if (row[0].empty()) throw ParseError(where + ": empty npi");
        if (row[3].empty()) throw ParseError(where + ": empty drug name");
        const auto year = parse_int(row[1], where + ": year");
        ClaimRecord rec;
        rec.year = static_cast<int>(year);
        for (std::size_t m = 0; m < kChannels; ++m) {
            const double v = parse_double(row[4 + m], where + ": " + claims_csv_header()[4 + m]);
            if (!std::isfinite(v)) throw ParseError(where + ": non-finite " + claims_csv_header()[4 + m]);
            if (v < 0.0) throw ParseError(where + ": negative " + claims_csv_header()[4 + m]);
            rec.metrics[m] = v;
        }
        rec.prescriber = table.prescribers.add(row[0]);
        if (rec.prescriber == table.specialty.size()) table.specialty.push_back(row[2]);
        rec.drug = table.drugs.add(row[3]);
        table.years.insert(rec.year);

        const auto key = std::make_tuple(rec.prescriber, rec.year, rec.drug);
        if (auto it = seen.find(key); it != seen.end()) {
            auto& prev = table.records[it->second];
            for (std::size_t m = 0; m < kChannels; ++m) prev.metrics[m] += rec.metrics[m];
            table.warnings.push_back(where + ": duplicate (npi=" + row[0] + ", year=" + row[1] + ", drug=" + row[3] +
                                     ") summed into earlier row");
            continue;
        }
        seen.emplace(key, table.records.size());
        table.records.push_back(rec);
    }
    return table;
}

inline ClaimsTable parse_claims_csv(const std::filesystem::path& path) {
    return parse_claims_text(read_text(path), path.string());
}

inline std::string serialize_claims(const ClaimsTable& t) {
    std::string out;
    for (std::size_t k = 0; k < claims_csv_header().size(); ++k) out += (k ? "," : "") + claims_csv_header()[k];
    out += "\n";
    for (const auto& r : t.records) {
        out += csv_escape(t.prescribers.npi(r.prescriber)) + "," + std::to_string(r.year) + "," +
               csv_escape(r.prescriber < t.specialty.size() ? t.specialty[r.prescriber] : "") + "," +
               csv_escape(t.drugs.name(r.drug));
        for (double v : r.metrics) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

enum class UnknownNpiPolicy { skip, error };

struct LabelTable {
    std::map<std::size_t, int> labels;  // prescriber index -> {0,1}
    std::size_t skipped_unknown = 0;
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t positives() const {
        std::size_t n = 0;
        for (const auto& [i, y] : labels) n += (y == 1);
        return n;
    }
};

inline LabelTable parse_labels_text(const std::string& text, const PrescriberIndex& prescribers,
                                    const std::string& source = "labels",
                                    UnknownNpiPolicy policy = UnknownNpiPolicy::skip) {
    const CsvTable t = parse_csv_text(text, source, {"npi", "label"});
    LabelTable out;
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const auto& row = t.rows[k];
        const std::string where = source + ":" + std::to_string(t.line_numbers[k]);
        if (row[1] != "0" && row[1] != "1") throw ParseError(where + ": label must be 0 or 1, got '" + row[1] + "'");
        const int y = row[1] == "1" ? 1 : 0;
        const auto idx = prescribers.find(row[0]);
        if (!idx) {
            if (policy == UnknownNpiPolicy::error) throw ParseError(where + ": npi '" + row[0] + "' not in claims");
            ++out.skipped_unknown;
            continue;
        }
        auto [it, inserted] = out.labels.emplace(*idx, y);
        if (!inserted && it->second != y) throw ParseError(where + ": conflicting labels for npi '" + row[0] + "'");
    }
    if (out.skipped_unknown > 0)
        out.warnings.push_back(source + ": skipped " + std::to_string(out.skipped_unknown) +
                               " label(s) whose npi is absent from the claims");
    return out;
}

inline LabelTable parse_labels(const std::filesystem::path& path, const PrescriberIndex& prescribers,
                               UnknownNpiPolicy policy = UnknownNpiPolicy::skip) {
    return parse_labels_text(read_text(path), prescribers, path.string(), policy);
}

}  // namespace clevercatch
