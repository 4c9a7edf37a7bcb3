#include "bridges/risk_metrics.hpp"

#include "bridges/csv.hpp"
#include "bridges/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace bridges {

std::string_view to_string(AssetTier tier) {
    switch (tier) {
    case AssetTier::Mega: return "Mega";
    case AssetTier::Large: return "Large";
    case AssetTier::Regular: return "Regular";
    }
    return "Regular";
}

AssetTier classify_tier(double total_assets) {
    if (total_assets >= 50'000.0) return AssetTier::Mega;
    if (total_assets > 10'000.0) return AssetTier::Large;
    return AssetTier::Regular;
}

double srisk_full(const SriskInputs& in) {
    if (!(in.k > 0.0 && in.k < 1.0)) throw Error(ErrorCode::InvalidInput, "k must lie in (0, 1)");
    if (!(in.liabilities >= 0.0) || !std::isfinite(in.liabilities))
        throw Error(ErrorCode::InvalidInput, "liabilities must be finite and >= 0");
    if (!(in.market_equity >= 0.0) || !std::isfinite(in.market_equity))
        throw Error(ErrorCode::InvalidInput, "market equity must be finite and >= 0");
    if (!(in.lrmes >= 0.0 && in.lrmes <= 1.0)) throw Error(ErrorCode::InvalidInput, "LRMES must lie in [0, 1]");
    double shortfall = in.k * in.liabilities - (1.0 - in.k) * in.market_equity * (1.0 - in.lrmes);
    return std::max(0.0, shortfall);
}

double srisk_cs(double liabilities, double equity, double k) {
    if (!(k > 0.0 && k < 1.0)) throw Error(ErrorCode::InvalidInput, "k must lie in (0, 1)");
    if (!(liabilities >= 0.0) || !std::isfinite(liabilities))
        throw Error(ErrorCode::InvalidInput, "liabilities must be finite and >= 0");
    if (!std::isfinite(equity)) throw Error(ErrorCode::InvalidInput, "equity must be finite");
    return std::max(0.0, k * liabilities - (1.0 - k) * equity);
}

std::string_view to_string(RatioKind kind) {
    switch (kind) {
    case RatioKind::NplRatio: return "npl_ratio";
    case RatioKind::Cet1Ratio: return "cet1_ratio";
    case RatioKind::Roa: return "roa";
    case RatioKind::Leverage: return "leverage";
    }
    return "npl_ratio";
}

std::optional<RatioKind> parse_ratio_kind(std::string_view name) {
    for (auto k : {RatioKind::NplRatio, RatioKind::Cet1Ratio, RatioKind::Roa, RatioKind::Leverage})
        if (to_string(k) == name) return k;
    return std::nullopt;
}

std::optional<double> ratio_value(const BankYearRecord& r, RatioKind kind) {
    switch (kind) {
    case RatioKind::NplRatio:
        if (!r.impaired_loans || r.gross_loans == 0.0) return std::nullopt;
        return *r.impaired_loans / r.gross_loans;
    case RatioKind::Cet1Ratio:
        return r.core_tier1_ratio;
    case RatioKind::Roa: {
        if (!r.net_income) return std::nullopt;
        double denominator = r.average_assets ? *r.average_assets : r.total_assets;
        if (denominator == 0.0) return std::nullopt;
        return *r.net_income / denominator;
    }
    case RatioKind::Leverage:
        if (r.total_equity == 0.0) return std::nullopt;
        return r.total_liabilities / r.total_equity;
    }
    return std::nullopt;
}

std::vector<RiskRatioRow> risk_ratios(const BankPanel& panel, double k) {
    std::vector<RiskRatioRow> rows;
    rows.reserve(panel.records().size());
    for (const auto& r : panel.records()) {
        RiskRatioRow row;
        row.bank_id = r.bank_id;
        row.country = r.country;
        row.year = r.year;
        row.npl_ratio = ratio_value(r, RatioKind::NplRatio);
        row.cet1_ratio = ratio_value(r, RatioKind::Cet1Ratio);
        row.roa = ratio_value(r, RatioKind::Roa);
        row.leverage = ratio_value(r, RatioKind::Leverage);
        row.srisk_cs = srisk_cs(r.total_liabilities, r.total_equity, k);
        row.total_assets = r.total_assets;
        row.tier = classify_tier(r.total_assets);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_risk_ratios(std::ostream& os, const std::vector<RiskRatioRow>& rows) {
    csv::write_row(os, {"bank_id", "country", "year", "npl_ratio", "cet1_ratio", "roa", "leverage", "srisk_cs",
                        "total_assets", "tier"});
    for (const auto& r : rows)
        csv::write_row(os, {r.bank_id, r.country.name(), std::to_string(r.year), csv::format_optional(r.npl_ratio),
                            csv::format_optional(r.cet1_ratio), csv::format_optional(r.roa),
                            csv::format_optional(r.leverage), csv::format_number(r.srisk_cs),
                            csv::format_number(r.total_assets), std::string(to_string(r.tier))});
}

// ---------------------------------------------------------------------------
// composite index

CompositeIndexSpec CompositeIndexSpec::parse(std::string_view text) {
    CompositeIndexSpec spec;
    spec.components.clear();
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ',')) {
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        item = trim(item);
        if (item.empty()) continue;
        auto colon = item.find(':');
        std::string name = trim(item.substr(0, colon));
        std::string sign = colon == std::string::npos ? "+" : trim(item.substr(colon + 1));
        auto kind = parse_ratio_kind(name);
        if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown index component '" + name + "'");
        if (sign != "+" && sign != "-") throw Error(ErrorCode::InvalidConfig, "component sign must be + or -");
        spec.components.push_back({*kind, sign == "+" ? +1 : -1});
    }
    spec.validate();
    return spec;
}

std::string CompositeIndexSpec::to_string() const {
    std::string out;
    for (const auto& c : components) {
        if (!out.empty()) out += ',';
        out += bridges::to_string(c.ratio);
        out += c.sign > 0 ? ":+" : ":-";
    }
    return out;
}

void CompositeIndexSpec::validate() const {
    if (components.empty()) throw Error(ErrorCode::InvalidSpec, "composite index needs at least one component");
    for (const auto& c : components)
        if (c.sign != 1 && c.sign != -1) throw Error(ErrorCode::InvalidSpec, "component sign must be +1 or -1");
}

StandardizedComponents standardize_components(const BankPanel& panel, const CompositeIndexSpec& spec) {
    spec.validate();
    const auto& recs = panel.records();
    const std::size_t m = spec.components.size();
    StandardizedComponents out;
    out.z.assign(recs.size(), std::vector<std::optional<double>>(m));
    out.index.assign(recs.size(), std::nullopt);

    for (int year : panel.years()) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < recs.size(); ++i)
            if (recs[i].year == year) members.push_back(i);
        if (members.size() < 2)
            throw Error(ErrorCode::DegenerateYear, "year " + std::to_string(year) + " has fewer than 2 banks");

        for (std::size_t c = 0; c < m; ++c) {
            std::vector<std::pair<std::size_t, double>> values;
            for (auto i : members)
                if (auto v = ratio_value(recs[i], spec.components[c].ratio)) values.emplace_back(i, *v);
            if (values.empty()) continue;
            double mean = 0.0;
            for (auto& [i, v] : values) mean += v;
            mean /= static_cast<double>(values.size());
            double var = 0.0;
            for (auto& [i, v] : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size());
            double sd = std::sqrt(var);
            // relative guard so round-off on identical values reads as zero variance
            bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
            for (auto& [i, v] : values) out.z[i][c] = degenerate ? 0.0 : (v - mean) / sd;
        }
    }

    for (std::size_t i = 0; i < recs.size(); ++i) {
        double sum = 0.0;
        int count = 0;
        for (std::size_t c = 0; c < m; ++c)
            if (out.z[i][c]) {
                sum += spec.components[c].sign * *out.z[i][c];
                ++count;
            }
        if (count) out.index[i] = sum / count;
    }
    return out;
}

IndexSeries composite_index(const BankPanel& panel, const CompositeIndexSpec& spec) {
    auto standardized = standardize_components(panel, spec);
    IndexSeries series;
    const auto& recs = panel.records();
    for (const auto& id : panel.roster()) series[id];
    for (std::size_t i = 0; i < recs.size(); ++i)
        if (standardized.index[i]) series[recs[i].bank_id].push_back({recs[i].year, *standardized.index[i]});
    return series;
}

ObservationFilter composite_observed(const CompositeIndexSpec& spec) {
    spec.validate();
    return [components = spec.components](const BankYearRecord& r) {
        for (const auto& c : components)
            if (ratio_value(r, c.ratio)) return true;
        return false;
    };
}

// ---------------------------------------------------------------------------
// aggregates

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    if (n != b.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<YearValue> rolling_profit_correlation(const BankPanel& panel, int window) {
    if (window < 3) throw Error(ErrorCode::InvalidInput, "correlation window must be >= 3");
    std::vector<YearValue> out;
    for (int year : panel.years()) {
        std::vector<std::vector<double>> paths;
        for (const auto& id : panel.roster()) {
            std::vector<double> path;
            for (int y = year - window + 1; y <= year; ++y) {
                const auto* r = panel.find(id, y);
                auto roa = r ? ratio_value(*r, RatioKind::Roa) : std::nullopt;
                if (!roa) break;
                path.push_back(*roa);
            }
            if (static_cast<int>(path.size()) == window) paths.push_back(std::move(path));
        }
        double sum = 0.0;
        long pairs = 0;
        for (std::size_t i = 0; i < paths.size(); ++i)
            for (std::size_t j = i + 1; j < paths.size(); ++j) {
                double rho = pearson(paths[i], paths[j]);
                if (std::isnan(rho)) continue;
                sum += rho;
                ++pairs;
            }
        out.push_back({year, pairs ? std::optional<double>(sum / static_cast<double>(pairs)) : std::nullopt});
    }
    return out;
}

std::vector<CountryYearValue> country_aggregate_srisk(const std::vector<RiskRatioRow>& rows) {
    if (rows.empty()) throw Error(ErrorCode::InvalidInput, "no risk rows to aggregate");
    std::map<std::pair<std::string, int>, std::pair<Country, double>> sums;
    for (const auto& r : rows) {
        auto& slot = sums[{r.country.name(), r.year}];
        slot.first = r.country;
        slot.second += r.srisk_cs;
    }
    std::vector<CountryYearValue> out;
    for (const auto& [key, value] : sums) out.push_back({value.first, key.second, value.second});
    return out;
}

} // namespace bridges
