#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include "bridges/abm.hpp"
#include "bridges/cli.hpp"
#include "bridges/config.hpp"
#include "bridges/dtw_network.hpp"
#include "bridges/error.hpp"
#include "bridges/panel.hpp"
#include "bridges/random.hpp"
#include "bridges/temporal_gnn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

using namespace bridges;
namespace fs = std::filesystem;

inline fs::path source_dir() { return BRIDGES_SOURCE_DIR; }
inline fs::path bundled_config_path() { return source_dir() / "configs" / "synthetic.conf"; }

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

/// Fresh empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("bridges_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline RunConfig bundled_run_config() {
    return make_run_config(Config::load(bundled_config_path()), bundled_config_path().parent_path());
}

inline const BankPanel& bundled_panel() {
    static const BankPanel panel = generate_synthetic_panel(*bundled_run_config().synthetic);
    return panel;
}

/// TGNN anomaly report for the bundled fixture, trained as configured.
inline AnomalyReport bundled_tgnn_report(const RunConfig& rc, const BankPanel& panel) {
    const auto& years = panel.years();
    auto dyn = build_dynamic_network(panel, years.front() + rc.window - 1, years.back(), rc.window, rc.index, rc.gamma);
    auto seq = build_sequence(dyn, panel, rc.index);
    auto trained = train(init_model(seq.features.front().cols(), rc.model), seq, rc.training);
    return anomaly_scores(trained.model, seq);
}

/// Minimal valid record; balance sheet scaled off total assets.
inline BankYearRecord make_record(std::string id, int year, double assets, double equity, double deposits,
                                  Country country = Country(Country::Kind::Brazil)) {
    BankYearRecord r;
    r.bank_id = std::move(id);
    r.bank_name = r.bank_id + " Bank";
    r.country = country;
    r.year = year;
    r.total_assets = assets;
    r.total_equity = equity;
    r.total_liabilities = assets - equity;
    r.total_customer_deposits = deposits;
    r.gross_loans = 0.6 * assets;
    r.impaired_loans = 0.03 * r.gross_loans;
    r.net_income = 0.01 * assets;
    r.core_tier1_ratio = 12.0;
    return r;
}

/// Random small panel for property tests; some banks may carry
/// non-positive equity.
inline BankPanel random_panel(Rng& rng, int banks, int year = 2018) {
    std::vector<BankYearRecord> recs;
    const Country countries[] = {Country(Country::Kind::Brazil), Country(Country::Kind::China),
                                 Country(Country::Kind::Russia)};
    for (int i = 0; i < banks; ++i) {
        double assets = std::exp(rng.uniform(4.0, 12.0));
        double eq_ratio = rng.uniform() < 0.05 ? rng.uniform(-0.05, 0.0) : rng.uniform(0.005, 0.2);
        double equity = eq_ratio * assets;
        double deposits = rng.uniform(0.1, 1.0) * std::max(0.0, assets - equity);
        std::string id = "R" + std::to_string(1000 + i).substr(1);
        recs.push_back(make_record(id, year, assets, equity, deposits, countries[rng.index(3)]));
    }
    return BankPanel::from_records(std::move(recs));
}

/// Top-down evaluation of the DTW recurrence on the raw definition.
inline double dtw_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size(), m = b.size();
    std::vector<double> memo(n * m, -1.0);
    std::function<double(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> double {
        double& slot = memo[i * m + j];
        if (slot >= 0.0) return slot;
        double cost = std::abs(a[i] - b[j]);
        double best;
        if (i == 0 && j == 0) best = 0.0;
        else if (i == 0) best = d(0, j - 1);
        else if (j == 0) best = d(i - 1, 0);
        else best = std::min({d(i - 1, j), d(i, j - 1), d(i - 1, j - 1)});
        return slot = cost + best;
    };
    return d(n - 1, m - 1);
}

/// Snapshots of banks on a slowly drifting line; in year `plant + 1` bank
/// `planted` has its edge weights reassigned in reverse similarity order.
struct PlantedFixture {
    TemporalSequence seq;
    std::size_t planted = 0;
    int planted_year = 0;
};

inline PlantedFixture planted_fixture(std::uint64_t seed, std::size_t n = 16, std::size_t years = 6,
                                      std::size_t plant = 3) {
    Rng rng(seed);
    PlantedFixture fx;
    fx.planted = static_cast<std::size_t>(rng.index(n));
    fx.planted_year = 2010 + static_cast<int>(plant);
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        fx.seq.roster.push_back("N" + std::to_string(100 + i).substr(1));
    }
    for (std::size_t t = 0; t < years; ++t) {
        for (auto& v : x) v += 0.05 * rng.normal();
        Matrix a(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a(i, j) = std::exp(-std::log(2.0) * std::abs(x[i] - x[j]));
        if (t == plant + 1) {
            const std::size_t p = fx.planted;
            std::vector<std::size_t> others;
            std::vector<double> weights;
            for (std::size_t j = 0; j < n; ++j)
                if (j != p) {
                    others.push_back(j);
                    weights.push_back(a(p, j));
                }
            std::sort(others.begin(), others.end(), [&](auto u, auto v) { return a(p, u) > a(p, v); });
            std::sort(weights.begin(), weights.end());
            for (std::size_t k = 0; k < others.size(); ++k) a(p, others[k]) = a(others[k], p) = weights[k];
        }
        Matrix f(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            f(i, 0) = x[i];
            double degree = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) degree += a(i, j);
            f(i, 1) = degree / static_cast<double>(n - 1);
        }
        fx.seq.years.push_back(2010 + static_cast<int>(t));
        fx.seq.adjacency.push_back(std::move(a));
        fx.seq.features.push_back(std::move(f));
    }
    return fx;
}

/// Random symmetric adjacency with unit diagonal and weights in (0, 1).
inline Matrix random_adjacency(Rng& rng, std::size_t n) {
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        a(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = rng.uniform(0.05, 0.95);
    }
    return a;
}

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& v : m.data()) v = rng.uniform(-scale, scale);
    return m;
}

/// Every file under `root`, relative path -> contents.
inline std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_text(e.path());
    return out;
}

/// Bundled config text with extra `key = value` lines appended (later keys win).
inline fs::path config_with(const fs::path& dir, const std::vector<std::string>& extra) {
    std::string text = read_text(bundled_config_path());
    for (const auto& line : extra) text += "\n" + line;
    fs::path p = dir / "run.conf";
    write_text(p, text + "\n");
    return p;
}

} // namespace testing
