#include "bridges/panel.hpp"

#include "bridges/csv.hpp"
#include "bridges/error.hpp"
#include "bridges/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace bridges {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace

Country Country::parse(std::string_view name) {
    std::string key = lower(name);
    if (key == "brazil") return Country(Kind::Brazil);
    if (key == "china") return Country(Kind::China);
    if (key == "india") return Country(Kind::India);
    if (key == "russia" || key == "russian federation") return Country(Kind::Russia);
    if (key == "south africa" || key == "southafrica" || key == "south_africa")
        return Country(Kind::SouthAfrica);
    Country other(Kind::Other);
    other.other_ = std::string(name);
    return other;
}

std::string Country::name() const {
    switch (kind_) {
    case Kind::Brazil: return "Brazil";
    case Kind::China: return "China";
    case Kind::India: return "India";
    case Kind::Russia: return "Russia";
    case Kind::SouthAfrica: return "South Africa";
    case Kind::Other: return other_;
    }
    return other_;
}

// ---------------------------------------------------------------------------
// schema

const std::vector<FieldDescriptor>& schema_fields() {
    using R = BankYearRecord;
    static const std::vector<FieldDescriptor> fields = {
        {"bank_id", "Bank ID", true, std::monostate{}},
        {"bank_name", "NAME", false, std::monostate{}},
        {"country", "Country Name", true, std::monostate{}},
        {"year", "Ranking Year", true, std::monostate{}},
        {"total_assets", "Total Assets", true, &R::total_assets},
        {"total_liabilities", "Total Liabilities", true, &R::total_liabilities},
        {"total_equity", "Total Equity", true, &R::total_equity},
        {"total_customer_deposits", "Total Customer Deposits", true, &R::total_customer_deposits},
        {"gross_loans", "Gross Loans", true, &R::gross_loans},
        {"impaired_loans", "Impaired Loans", false, &R::impaired_loans},
        {"net_income", "Net Income", false, &R::net_income},
        {"net_interest_income", "Net Interest Income", false, &R::net_interest_income},
        {"tier1_capital", "Tier 1 Capital", false, &R::tier1_capital},
        {"core_tier1_ratio", "Core Tier 1 Regulatory Capital Ratio", false, &R::core_tier1_ratio},
        {"tier1_ratio", "Tier 1 Regulatory Capital Ratio", false, &R::tier1_ratio},
        {"total_regulatory_capital_ratio", "Total Regulatory Capital Ratio", false,
         &R::total_regulatory_capital_ratio},
        {"loan_loss_provisions", "Loan Loss Provisions", false, &R::loan_loss_provisions},
        {"fitch_core_capital", "Fitch Core Capital", false, &R::fitch_core_capital},
        {"subordinated_debt", "Total Subordinated Debt on Balance Sheet", false, &R::subordinated_debt},
        {"net_int_rev_avg_assets", "Net Int Rev / Avg Assets", false, &R::net_int_rev_avg_assets},
        {"net_income_avg_assets", "Net Income/ Average Total Assets", false, &R::net_income_avg_assets},
        {"average_assets", "Average Assets", false, &R::average_assets},
        {"npl_ratio_reported", "Impaired Loans(NPLs)/ Gross Loans", false, &R::npl_ratio_reported},
        {"rwa_total", "Risk Weighted Assets including floor/cap per Basel II", false, &R::rwa_total},
        {"rwa_credit", "Risk Weighted Assets Credit Risk", false, &R::rwa_credit},
        {"rwa_market", "Risk Weighted Assets Market Risk", false, &R::rwa_market},
        {"rwa_operational", "Risk Weighted Assets Operational Market Risk", false, &R::rwa_operational},
    };
    return fields;
}

void ColumnMapping::set(std::string key, std::string header) {
    const auto& fields = schema_fields();
    bool known = std::any_of(fields.begin(), fields.end(), [&](const FieldDescriptor& f) { return f.key == key; });
    if (!known) throw Error(ErrorCode::InvalidConfig, "unknown column key '" + key + "'");
    overrides_[std::move(key)] = std::move(header);
}

std::string ColumnMapping::header_for(std::string_view key) const {
    if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
    for (const auto& f : schema_fields())
        if (f.key == key) return std::string(f.default_header);
    throw Error(ErrorCode::InvalidConfig, "unknown column key '" + std::string(key) + "'");
}

// ---------------------------------------------------------------------------
// validation

std::optional<std::string> check_record(const BankYearRecord& r) {
    if (r.bank_id.empty()) return "empty bank_id";
    if (r.year < 1990 || r.year > 2100) return "year " + std::to_string(r.year) + " outside [1990, 2100]";
    for (const auto& f : schema_fields()) {
        if (auto m = std::get_if<double BankYearRecord::*>(&f.member)) {
            if (!std::isfinite(r.**m)) return std::string(f.key) + " is not finite";
        } else if (auto o = std::get_if<std::optional<double> BankYearRecord::*>(&f.member)) {
            if ((r.**o) && !std::isfinite(*(r.**o))) return std::string(f.key) + " is not finite";
        }
    }
    if (r.total_assets < 0) return "total_assets < 0";
    if (r.total_liabilities < 0) return "total_liabilities < 0";
    if (r.gross_loans < 0) return "gross_loans < 0";
    if (r.impaired_loans && *r.impaired_loans < 0) return "impaired_loans < 0";
    if (r.impaired_loans && *r.impaired_loans > r.gross_loans) return "impaired_loans > gross_loans";
    return std::nullopt;
}

BankPanel BankPanel::from_records(std::vector<BankYearRecord> records) {
    for (const auto& r : records)
        if (auto problem = check_record(r))
            throw Error(ErrorCode::InvariantViolation,
                        "bank " + r.bank_id + " year " + std::to_string(r.year) + ": " + *problem);

    std::sort(records.begin(), records.end(), [](const BankYearRecord& a, const BankYearRecord& b) {
        return std::tie(a.bank_id, a.year) < std::tie(b.bank_id, b.year);
    });
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].bank_id == records[i - 1].bank_id && records[i].year == records[i - 1].year)
            throw Error(ErrorCode::DuplicateKey,
                        "(" + records[i].bank_id + ", " + std::to_string(records[i].year) + ")");

    BankPanel panel;
    std::set<int> years;
    for (const auto& r : records) {
        if (panel.roster_.empty() || panel.roster_.back() != r.bank_id) panel.roster_.push_back(r.bank_id);
        years.insert(r.year);
    }
    panel.years_.assign(years.begin(), years.end());
    panel.records_ = std::move(records);
    return panel;
}

const BankYearRecord* BankPanel::find(std::string_view bank_id, int year) const {
    auto it = std::lower_bound(records_.begin(), records_.end(), std::pair{bank_id, year},
                               [](const BankYearRecord& r, const std::pair<std::string_view, int>& key) {
                                   return std::pair<std::string_view, int>{r.bank_id, r.year} < key;
                               });
    if (it != records_.end() && it->bank_id == bank_id && it->year == year) return &*it;
    return nullptr;
}

std::vector<const BankYearRecord*> BankPanel::records_in_year(int year) const {
    std::vector<const BankYearRecord*> out;
    for (const auto& r : records_)
        if (r.year == year) out.push_back(&r);
    return out;
}

std::vector<Country> BankPanel::countries() const {
    std::set<Country> seen;
    for (const auto& r : records_) seen.insert(r.country);
    return {seen.begin(), seen.end()};
}

void validate_panel(const BankPanel& panel) {
    for (const auto& r : panel.records())
        if (auto problem = check_record(r))
            throw Error(ErrorCode::InvariantViolation, "bank " + r.bank_id + ": " + *problem);
    const auto& recs = panel.records();
    for (std::size_t i = 1; i < recs.size(); ++i)
        if (std::tie(recs[i - 1].bank_id, recs[i - 1].year) >= std::tie(recs[i].bank_id, recs[i].year))
            throw Error(ErrorCode::InvariantViolation, "records not strictly ordered by (bank_id, year)");
    const auto& roster = panel.roster();
    if (!std::is_sorted(roster.begin(), roster.end()) ||
        std::adjacent_find(roster.begin(), roster.end()) != roster.end())
        throw Error(ErrorCode::InvariantViolation, "roster not sorted and unique");
    const auto& years = panel.years();
    if (!std::is_sorted(years.begin(), years.end()) ||
        std::adjacent_find(years.begin(), years.end()) != years.end())
        throw Error(ErrorCode::InvariantViolation, "years not sorted and unique");
}

// ---------------------------------------------------------------------------
// CSV

BankPanel parse_panel(std::string_view csv_text, const ColumnMapping& mapping) {
    csv::Table table = csv::parse(csv_text);
    const auto& fields = schema_fields();

    std::vector<std::optional<std::size_t>> column_of(fields.size());
    for (std::size_t f = 0; f < fields.size(); ++f) {
        std::string header = mapping.header_for(fields[f].key);
        column_of[f] = table.column(header);
        if (!column_of[f] && fields[f].mandatory)
            throw Error(ErrorCode::MissingColumn, std::string(fields[f].key) + " (header '" + header + "')");
    }

    std::vector<BankYearRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t row = 0; row < table.rows.size(); ++row) {
        const auto& cells = table.rows[row];
        const std::size_t line = row + 2;
        auto cell = [&](std::size_t f) -> std::string_view {
            if (!column_of[f] || *column_of[f] >= cells.size()) return {};
            return cells[*column_of[f]];
        };
        auto fail = [&](std::size_t f, const std::string& why) {
            throw Error(ErrorCode::ParseError, "row " + std::to_string(line) + ", column " +
                                                   std::string(fields[f].key) + ": " + why);
        };

        BankYearRecord r;
        for (std::size_t f = 0; f < fields.size(); ++f) {
            std::string_view text = cell(f);
            const auto& field = fields[f];
            if (field.key == "bank_id") {
                if (text.empty()) fail(f, "empty");
                r.bank_id = std::string(text);
            } else if (field.key == "bank_name") {
                r.bank_name = std::string(text);
            } else if (field.key == "country") {
                if (text.empty()) fail(f, "empty");
                r.country = Country::parse(text);
            } else if (field.key == "year") {
                auto value = csv::parse_number(text);
                if (!value || *value != std::floor(*value)) fail(f, "not an integer year: '" + std::string(text) + "'");
                r.year = static_cast<int>(*value);
            } else if (auto m = std::get_if<double BankYearRecord::*>(&field.member)) {
                auto value = csv::parse_number(text);
                if (!value) fail(f, text.empty() ? "missing mandatory value" : "not a number: '" + std::string(text) + "'");
                r.**m = *value;
            } else if (auto o = std::get_if<std::optional<double> BankYearRecord::*>(&field.member)) {
                if (text.find_first_not_of(" \t") == std::string_view::npos) continue;
                auto value = csv::parse_number(text);
                if (!value) fail(f, "not a number: '" + std::string(text) + "'");
                r.**o = *value;
            }
        }
        if (auto problem = check_record(r))
            throw Error(ErrorCode::InvariantViolation, "row " + std::to_string(line) + " (bank " + r.bank_id +
                                                           ", year " + std::to_string(r.year) + "): " + *problem);
        records.push_back(std::move(r));
    }
    return BankPanel::from_records(std::move(records));
}

BankPanel load_panel(const std::filesystem::path& path, const ColumnMapping& mapping) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open panel file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_panel(ss.str(), mapping);
}

void save_panel(const BankPanel& panel, std::ostream& os, const ColumnMapping& mapping) {
    const auto& fields = schema_fields();
    std::vector<std::string> header;
    for (const auto& f : fields) header.push_back(mapping.header_for(f.key));
    csv::write_row(os, header);

    std::vector<std::string> row;
    for (const auto& r : panel.records()) {
        row.clear();
        for (const auto& f : fields) {
            if (f.key == "bank_id") row.push_back(r.bank_id);
            else if (f.key == "bank_name") row.push_back(r.bank_name);
            else if (f.key == "country") row.push_back(r.country.name());
            else if (f.key == "year") row.push_back(std::to_string(r.year));
            else if (auto m = std::get_if<double BankYearRecord::*>(&f.member)) row.push_back(csv::format_number(r.**m));
            else if (auto o = std::get_if<std::optional<double> BankYearRecord::*>(&f.member))
                row.push_back(csv::format_optional(r.**o));
        }
        csv::write_row(os, row);
    }
}

void save_panel(const BankPanel& panel, const std::filesystem::path& path, const ColumnMapping& mapping) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    save_panel(panel, out, mapping);
}

// ---------------------------------------------------------------------------
// synthetic panels

std::vector<CountryShare> SyntheticPanelSpec::default_mix() {
    using K = Country::Kind;
    return {{Country(K::Brazil), 0.16}, {Country(K::China), 0.40}, {Country(K::India), 0.12},
            {Country(K::Russia), 0.28}, {Country(K::SouthAfrica), 0.04}};
}

namespace {

// Acklam's rational approximation of the standard normal quantile.
double normal_quantile(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double low = 0.02425;
    if (p < low) {
        double q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > 1 - low) {
        double q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

// Money is kept on a 1/16 grid so that liabilities + equity == assets holds
// exactly in binary floating point.
double quantize(double x) { return std::round(x * 16.0) / 16.0; }
double quantize_down(double x) { return std::floor(x * 16.0) / 16.0; }

double npl_multiplier(const Country& c) {
    switch (c.kind()) {
    case Country::Kind::Brazil: return 1.2;
    case Country::Kind::China: return 0.5;
    case Country::Kind::India: return 1.4;
    case Country::Kind::Russia: return 2.6;
    case Country::Kind::SouthAfrica: return 1.6;
    case Country::Kind::Other: return 1.0;
    }
    return 1.0;
}

struct BankProfile {
    double initial_assets;
    double growth;
    double equity_ratio;
    double deposit_ratio;
    double loan_ratio;
    double npl_base;
    double roa_base;
    double nim;
    double rwa_density;
    bool erratic = false;
};

void check_spec(const SyntheticPanelSpec& spec) {
    if (spec.n_banks < 2) throw Error(ErrorCode::InvalidSpec, "n_banks must be >= 2");
    if (spec.year_end < spec.year_start) throw Error(ErrorCode::InvalidSpec, "year_end < year_start");
    if (spec.year_start < 1990 || spec.year_end > 2100) throw Error(ErrorCode::InvalidSpec, "years outside [1990, 2100]");
    if (spec.country_mix.empty()) throw Error(ErrorCode::InvalidSpec, "empty country mix");
    double total = 0.0;
    for (const auto& share : spec.country_mix) {
        if (!(share.proportion >= 0.0)) throw Error(ErrorCode::InvalidSpec, "negative country proportion");
        total += share.proportion;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidSpec, "country proportions must sum to 1");
    if (!(spec.size_log_sd > 0.0) || !std::isfinite(spec.size_log_mean))
        throw Error(ErrorCode::InvalidSpec, "invalid size distribution");
    if (spec.anchor_country && (spec.anchor_top_k < 0 || spec.anchor_top_k > spec.n_banks))
        throw Error(ErrorCode::InvalidSpec, "anchor_top_k out of range");
    if (spec.volatile_banks < 0 || spec.volatile_banks > spec.n_banks)
        throw Error(ErrorCode::InvalidSpec, "volatile_banks out of range");
}

// Largest-remainder apportionment of n banks to the country mix.
std::vector<Country> apportion(const SyntheticPanelSpec& spec) {
    const auto& mix = spec.country_mix;
    std::vector<int> counts(mix.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        double exact = mix[i].proportion * spec.n_banks;
        counts[i] = static_cast<int>(std::floor(exact));
        assigned += counts[i];
        remainders.emplace_back(exact - counts[i], i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < spec.n_banks; ++k, ++assigned) counts[remainders[k % remainders.size()].second]++;
    std::vector<Country> out;
    for (std::size_t i = 0; i < mix.size(); ++i) out.insert(out.end(), counts[i], mix[i].country);
    return out;
}

} // namespace

BankPanel generate_synthetic_panel(const SyntheticPanelSpec& spec) {
    check_spec(spec);
    Rng rng(spec.seed);
    const int n = spec.n_banks;
    const int n_years = spec.year_end - spec.year_start + 1;

    // stratified log-normal sizes so small panels still cover the tails
    std::vector<double> sizes(n);
    for (int i = 0; i < n; ++i) {
        double p = (i + rng.uniform(0.2, 0.8)) / n;
        sizes[i] = quantize(std::exp(spec.size_log_mean + spec.size_log_sd * normal_quantile(p)));
    }
    if (n >= 3) {
        bool mega = false, large = false, regular = false;
        for (double a : sizes) {
            mega |= a >= 50'000.0;
            large |= a > 10'000.0 && a < 50'000.0;
            regular |= a <= 10'000.0;
        }
        if (!(mega && large && regular))
            throw Error(ErrorCode::InvalidSpec, "size distribution does not span the three asset tiers");
    }
    shuffle(sizes, rng);

    std::vector<Country> countries = apportion(spec);
    shuffle(countries, rng);
    if (spec.anchor_country && spec.anchor_top_k > 0) {
        std::vector<int> by_size(n);
        std::iota(by_size.begin(), by_size.end(), 0);
        std::stable_sort(by_size.begin(), by_size.end(), [&](int a, int b) { return sizes[a] > sizes[b]; });
        int available = static_cast<int>(std::count(countries.begin(), countries.end(), *spec.anchor_country));
        if (available < spec.anchor_top_k)
            throw Error(ErrorCode::InvalidSpec, "anchor country has fewer banks than anchor_top_k");
        for (int rank = 0; rank < spec.anchor_top_k; ++rank) {
            int target = by_size[rank];
            if (countries[target] == *spec.anchor_country) continue;
            // swap with the smallest anchor-country bank outside the top k
            for (int r = n - 1; r >= spec.anchor_top_k; --r) {
                int donor = by_size[r];
                if (countries[donor] == *spec.anchor_country) {
                    std::swap(countries[target], countries[donor]);
                    break;
                }
            }
        }
    }

    // the five largest banks are always well capitalized
    std::vector<double> ranked_sizes = sizes;
    std::sort(ranked_sizes.begin(), ranked_sizes.end(), std::greater<>());
    const double top_cut = ranked_sizes[std::min<std::size_t>(4, ranked_sizes.size() - 1)];

    std::vector<BankProfile> profiles(n);
    for (int i = 0; i < n; ++i) {
        BankProfile& p = profiles[i];
        p.initial_assets = sizes[i];
        p.growth = rng.uniform(0.035, 0.065);
        double thin_probability = sizes[i] >= top_cut ? 0.0 : 0.3;
        bool thin = rng.uniform() < thin_probability;
        p.equity_ratio = thin ? rng.uniform(0.025, 0.06) : rng.uniform(0.085, 0.14);
        p.deposit_ratio = rng.uniform(0.5, 0.75);
        p.loan_ratio = rng.uniform(0.45, 0.7);
        p.npl_base = 0.02 * npl_multiplier(countries[i]) * std::exp(rng.normal(0.0, 0.5));
        p.roa_base = rng.normal(0.009, 0.004) - (thin ? 0.003 : 0.0);
        p.nim = rng.uniform(0.015, 0.035);
        p.rwa_density = rng.uniform(0.5, 0.8);
    }

    // erratic small banks: intermittent idiosyncratic distress episodes
    if (spec.volatile_banks > 0) {
        std::vector<int> small;
        for (int i = 0; i < n; ++i)
            if (sizes[i] <= 10'000.0) small.push_back(i);
        if (static_cast<int>(small.size()) < spec.volatile_banks)
            throw Error(ErrorCode::InvalidSpec, "fewer Regular-tier banks than volatile_banks");
        shuffle(small, rng);
        for (int v = 0; v < spec.volatile_banks; ++v) {
            BankProfile& p = profiles[small[v]];
            p.erratic = true;
            p.equity_ratio = rng.uniform(0.085, 0.14);
        }
    }

    std::set<int> shock_years(spec.shock_years.begin(), spec.shock_years.end());
    std::vector<BankYearRecord> records;
    records.reserve(static_cast<std::size_t>(n) * n_years);
    const int id_width = n >= 1000 ? 4 : 3;
    for (int i = 0; i < n; ++i) {
        const BankProfile& p = profiles[i];
        char id[16];
        std::snprintf(id, sizeof id, "B%0*d", id_width, i + 1);
        std::string name = countries[i].name() + " Synthetic Bank " + std::to_string(i + 1);

        double equity_dev = 0.0, npl_dev = 0.0, roa_dev = 0.0, log_size = std::log(p.initial_assets);
        std::optional<double> previous_assets;
        for (int k = 0; k < n_years; ++k) {
            const int year = spec.year_start + k;
            const bool shocked = shock_years.count(year) > 0;
            if (k > 0) log_size += p.growth + rng.normal(0.0, 0.03) - (shocked ? 0.04 : 0.0);
            equity_dev = 0.6 * equity_dev + rng.normal(0.0, 0.004);
            npl_dev = 0.7 * npl_dev + rng.normal(0.0, 0.15);
            roa_dev = 0.5 * roa_dev + rng.normal(0.0, 0.002);
            const bool episode = p.erratic && rng.uniform() < 0.35;

            BankYearRecord r;
            r.bank_id = id;
            r.bank_name = name;
            r.country = countries[i];
            r.year = year;
            r.total_assets = quantize(std::exp(log_size));
            double e = std::clamp(p.equity_ratio + equity_dev - (shocked ? 0.008 : 0.0) - (episode ? 0.03 : 0.0),
                                  0.01, 0.3);
            r.total_equity = quantize(e * r.total_assets);
            r.total_liabilities = r.total_assets - r.total_equity;
            r.total_customer_deposits =
                quantize_down(std::clamp(p.deposit_ratio + rng.normal(0.0, 0.01), 0.3, 0.95) * r.total_liabilities);
            r.gross_loans = quantize(p.loan_ratio * r.total_assets);
            double npl = std::clamp(p.npl_base * std::exp(npl_dev) * (shocked ? 2.5 : 1.0) * (episode ? 4.0 : 1.0), 0.0005,
                                    0.5);
            r.impaired_loans = quantize_down(npl * r.gross_loans);
            double roa = p.roa_base + roa_dev - (shocked ? 0.006 : 0.0) - (episode ? 0.025 : 0.0);
            r.net_income = quantize(roa * r.total_assets);
            r.net_interest_income = quantize(p.nim * r.total_assets);
            r.tier1_capital = quantize(0.9 * r.total_equity);
            double rwa = quantize(p.rwa_density * r.total_assets);
            r.rwa_total = rwa;
            r.rwa_credit = quantize(0.85 * rwa);
            r.rwa_market = quantize(0.05 * rwa);
            r.rwa_operational = quantize(0.1 * rwa);
            r.fitch_core_capital = quantize(0.85 * r.total_equity);
            r.core_tier1_ratio = 100.0 * *r.fitch_core_capital / rwa;
            r.tier1_ratio = 100.0 * *r.tier1_capital / rwa;
            r.total_regulatory_capital_ratio = *r.tier1_ratio + 2.5;
            r.subordinated_debt = quantize(0.01 * r.total_assets);
            r.loan_loss_provisions = quantize(0.3 * *r.impaired_loans + 0.002 * r.gross_loans);
            r.npl_ratio_reported = 100.0 * *r.impaired_loans / r.gross_loans;
            if (previous_assets) {
                r.average_assets = quantize(0.5 * (r.total_assets + *previous_assets));
                r.net_income_avg_assets = 100.0 * *r.net_income / *r.average_assets;
                r.net_int_rev_avg_assets = 100.0 * *r.net_interest_income / *r.average_assets;
            }
            previous_assets = r.total_assets;
            records.push_back(std::move(r));
        }
    }
    return BankPanel::from_records(std::move(records));
}

// ---------------------------------------------------------------------------
// slicing

PanelSlice panel_slice(const BankPanel& panel, int year, int window, const ObservationFilter& observed) {
    if (window < 2) throw Error(ErrorCode::InvalidInput, "window must be >= 2");
    const auto& years = panel.years();
    if (!std::binary_search(years.begin(), years.end(), year))
        throw Error(ErrorCode::InvalidInput, "year " + std::to_string(year) + " not in panel");
    const int first = year - window + 1;

    std::vector<BankYearRecord> kept;
    PanelSlice slice;
    const auto& recs = panel.records();
    for (std::size_t i = 0; i < recs.size();) {
        std::size_t j = i;
        int count = 0;
        std::vector<const BankYearRecord*> in_window;
        for (; j < recs.size() && recs[j].bank_id == recs[i].bank_id; ++j) {
            if (recs[j].year < first || recs[j].year > year) continue;
            in_window.push_back(&recs[j]);
            if (!observed || observed(recs[j])) ++count;
        }
        if (count >= 2) {
            for (auto* r : in_window) kept.push_back(*r);
        } else {
            slice.dropped.push_back(recs[i].bank_id);
        }
        i = j;
    }
    if (kept.empty())
        throw Error(ErrorCode::EmptySlice, "no bank has two observations in window ending " + std::to_string(year));
    slice.panel = BankPanel::from_records(std::move(kept));
    return slice;
}

PanelSlice panel_slice(const BankPanel& panel, int year, int window) {
    return panel_slice(panel, year, window, ObservationFilter{});
}

} // namespace bridges
