#pragma once

#include "bridges/panel.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bridges {

constexpr double kDefaultPrudentialRatio = 0.08;

enum class AssetTier { Mega, Large, Regular };

std::string_view to_string(AssetTier tier);

/// Mega: assets >= 50,000; Large: 10,000 < assets < 50,000; Regular: <= 10,000
/// (millions USD).
AssetTier classify_tier(double total_assets);

struct SriskInputs {
    double k = kDefaultPrudentialRatio;
    double liabilities = 0.0;
    double market_equity = 0.0;
    double lrmes = 0.0;
};

/// max(0, k*D - (1-k)*W*(1-LRMES)) for caller-supplied LRMES.
double srisk_full(const SriskInputs& inputs);

/// Balance-sheet capital shortfall max(0, k*L - (1-k)*E). Equity may be
/// negative.
double srisk_cs(double liabilities, double equity, double k = kDefaultPrudentialRatio);

enum class RatioKind { NplRatio, Cet1Ratio, Roa, Leverage };

std::string_view to_string(RatioKind kind);
std::optional<RatioKind> parse_ratio_kind(std::string_view name);

/// Record-local ratio, null when an input is null or a denominator is zero.
/// ROA divides by average assets when reported, else by year-end assets.
std::optional<double> ratio_value(const BankYearRecord& record, RatioKind kind);

struct RiskRatioRow {
    std::string bank_id;
    Country country;
    int year = 0;
    std::optional<double> npl_ratio;  // fraction
    std::optional<double> cet1_ratio; // percent
    std::optional<double> roa;        // fraction
    std::optional<double> leverage;   // liabilities / equity
    double srisk_cs = 0.0;
    double total_assets = 0.0;
    AssetTier tier = AssetTier::Regular;
};

std::vector<RiskRatioRow> risk_ratios(const BankPanel& panel, double k = kDefaultPrudentialRatio);
void write_risk_ratios(std::ostream& os, const std::vector<RiskRatioRow>& rows);

struct IndexComponent {
    RatioKind ratio;
    int sign; // +1 raises risk, -1 lowers it
};

struct CompositeIndexSpec {
    std::vector<IndexComponent> components = {
        {RatioKind::NplRatio, +1}, {RatioKind::Cet1Ratio, -1}, {RatioKind::Roa, -1}, {RatioKind::Leverage, +1}};

    /// Parses "npl_ratio:+,cet1_ratio:-,...".
    static CompositeIndexSpec parse(std::string_view text);
    std::string to_string() const;
    void validate() const;
};

/// Cross-sectional z-scores (population sigma) of each component within each
/// year, aligned with panel.records(). Zero-variance components score 0.
struct StandardizedComponents {
    std::vector<std::vector<std::optional<double>>> z; // [record][component], unsigned
    std::vector<std::optional<double>> index;          // signed mean of available z
};

StandardizedComponents standardize_components(const BankPanel& panel, const CompositeIndexSpec& spec);

struct IndexPoint {
    int year;
    double value;
    bool operator==(const IndexPoint&) const = default;
};

using IndexSeries = std::map<std::string, std::vector<IndexPoint>, std::less<>>;

/// Per-bank composite index series with null years omitted.
IndexSeries composite_index(const BankPanel& panel, const CompositeIndexSpec& spec);

/// Accepts records on which at least one component ratio is defined, i.e.
/// whose composite index is non-null.
ObservationFilter composite_observed(const CompositeIndexSpec& spec);

struct YearValue {
    int year;
    std::optional<double> value;
};

/// Mean pairwise Pearson correlation of ROA over the trailing window, over
/// bank pairs with complete, non-constant data. Null without any such pair.
std::vector<YearValue> rolling_profit_correlation(const BankPanel& panel, int window);

struct CountryYearValue {
    Country country;
    int year;
    double value;
};

/// Sum of srisk_cs by (country, year), ordered by country name then year.
std::vector<CountryYearValue> country_aggregate_srisk(const std::vector<RiskRatioRow>& rows);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

} // namespace bridges
