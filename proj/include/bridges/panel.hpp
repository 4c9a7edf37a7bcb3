#pragma once

// Annual bank balance-sheet panels: canonical record schema, CSV ingestion
// and export, synthetic panel generation and rolling-window slicing.
//
// Monetary fields are in millions of USD; ratio fields suffixed `_ratio`
// carry percentages exactly as exported by the data vendor.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace bridges {

class Country {
public:
    enum class Kind { Brazil, China, India, Russia, SouthAfrica, Other };

    Country() = default;
    explicit Country(Kind kind) : kind_(kind) {}

    /// Maps the five BRICS names (case-insensitive, "South Africa" or
    /// "SouthAfrica") onto their kinds; anything else becomes Other(name).
    static Country parse(std::string_view name);

    Kind kind() const noexcept { return kind_; }
    std::string name() const;

    friend bool operator==(const Country& a, const Country& b) { return a.name() == b.name(); }
    friend auto operator<=>(const Country& a, const Country& b) { return a.name() <=> b.name(); }

private:
    Kind kind_ = Kind::Other;
    std::string other_;
};

struct BankYearRecord {
    std::string bank_id;
    std::string bank_name;
    Country country;
    int year = 0;

    // mandatory
    double total_assets = 0.0;
    double total_liabilities = 0.0;
    double total_equity = 0.0;
    double total_customer_deposits = 0.0;
    double gross_loans = 0.0;

    std::optional<double> impaired_loans;
    std::optional<double> net_income;
    std::optional<double> net_interest_income;
    std::optional<double> tier1_capital;
    std::optional<double> core_tier1_ratio;
    std::optional<double> tier1_ratio;
    std::optional<double> total_regulatory_capital_ratio;
    std::optional<double> loan_loss_provisions;

    // remaining vendor variables, carried through untouched
    std::optional<double> fitch_core_capital;
    std::optional<double> subordinated_debt;
    std::optional<double> net_int_rev_avg_assets;
    std::optional<double> net_income_avg_assets;
    std::optional<double> average_assets;
    std::optional<double> npl_ratio_reported;
    std::optional<double> rwa_total;
    std::optional<double> rwa_credit;
    std::optional<double> rwa_market;
    std::optional<double> rwa_operational;

    bool operator==(const BankYearRecord&) const = default;
};

/// Returns a description of the first violated record invariant, if any.
std::optional<std::string> check_record(const BankYearRecord& record);

/// One column of the canonical schema.
struct FieldDescriptor {
    std::string_view key;            // canonical name, used in config `columns.<key>=...`
    std::string_view default_header; // vendor variable name
    bool mandatory;
    std::variant<std::monostate, double BankYearRecord::*, std::optional<double> BankYearRecord::*> member;
};

/// All columns in export order. The four descriptive columns (bank_id,
/// bank_name, country, year) come first and have no numeric member.
const std::vector<FieldDescriptor>& schema_fields();

/// Canonical key -> header name in the file. Unmapped keys use the default
/// header.
class ColumnMapping {
public:
    ColumnMapping() = default;
    void set(std::string key, std::string header);
    std::string header_for(std::string_view key) const;
    const std::map<std::string, std::string, std::less<>>& overrides() const { return overrides_; }

private:
    std::map<std::string, std::string, std::less<>> overrides_;
};

class BankPanel {
public:
    BankPanel() = default;

    /// Validates every record and the (bank_id, year) uniqueness invariant.
    /// Records are stored sorted by (bank_id, year).
    static BankPanel from_records(std::vector<BankYearRecord> records);

    const std::vector<BankYearRecord>& records() const noexcept { return records_; }
    const std::vector<std::string>& roster() const noexcept { return roster_; }
    const std::vector<int>& years() const noexcept { return years_; }
    bool empty() const noexcept { return records_.empty(); }

    const BankYearRecord* find(std::string_view bank_id, int year) const;
    std::vector<const BankYearRecord*> records_in_year(int year) const;
    /// Distinct countries, sorted by name.
    std::vector<Country> countries() const;

    bool operator==(const BankPanel&) const = default;

private:
    std::vector<BankYearRecord> records_;
    std::vector<std::string> roster_;
    std::vector<int> years_;
};

/// Sweep-checks every record and panel invariant; throws InvariantViolation.
void validate_panel(const BankPanel& panel);

BankPanel load_panel(const std::filesystem::path& path, const ColumnMapping& mapping = {});
BankPanel parse_panel(std::string_view csv_text, const ColumnMapping& mapping = {});
void save_panel(const BankPanel& panel, std::ostream& os, const ColumnMapping& mapping = {});
void save_panel(const BankPanel& panel, const std::filesystem::path& path, const ColumnMapping& mapping = {});

struct CountryShare {
    Country country;
    double proportion = 0.0;
};

struct SyntheticPanelSpec {
    int n_banks = 60;
    int year_start = 2008;
    int year_end = 2024;
    std::vector<CountryShare> country_mix;
    /// log-normal parameters of first-year total assets (millions USD)
    double size_log_mean = 9.6;
    double size_log_sd = 1.6;
    std::vector<int> shock_years;
    std::uint64_t seed = 7;
    /// When set, the `anchor_top_k` largest banks are assigned to this
    /// country (the country must have at least that many banks).
    std::optional<Country> anchor_country;
    int anchor_top_k = 0;
    /// Regular-tier banks given intermittent idiosyncratic distress episodes
    /// (NPL spikes, losses, capital dips) in randomly drawn years.
    int volatile_banks = 0;

    /// Five BRICS countries in the default sample proportions.
    static std::vector<CountryShare> default_mix();
};

BankPanel generate_synthetic_panel(const SyntheticPanelSpec& spec);

struct PanelSlice {
    BankPanel panel;
    std::vector<std::string> dropped; // banks with fewer than 2 observations
};

using ObservationFilter = std::function<bool(const BankYearRecord&)>;

/// Records with year in [year - window + 1, year] (truncated at the panel
/// start), restricted to banks with at least two records accepted by
/// `observed` inside the window.
PanelSlice panel_slice(const BankPanel& panel, int year, int window, const ObservationFilter& observed);
PanelSlice panel_slice(const BankPanel& panel, int year, int window);

} // namespace bridges
