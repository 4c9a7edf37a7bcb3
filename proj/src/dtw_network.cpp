#include "bridges/dtw_network.hpp"

#include "bridges/csv.hpp"
#include "bridges/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>

namespace bridges {

double dtw_distance(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::EmptySeries, "DTW needs two non-empty series");
    const std::size_t n = a.size(), m = b.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    // cost[i][j] over a (n+1) x (m+1) table with an infinite border
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            double local = std::abs(a[i - 1] - b[j - 1]);
            cur[j] = local + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double similarity(double distance, double gamma) {
    if (!(distance >= 0.0)) throw Error(ErrorCode::InvalidInput, "distance must be >= 0");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw Error(ErrorCode::InvalidInput, "gamma must be finite and > 0");
    return std::exp(-gamma * distance);
}

double median_gamma(std::span<const double> distances) {
    std::vector<double> positive;
    for (double d : distances)
        if (d > 0.0) positive.push_back(d);
    if (positive.empty()) throw Error(ErrorCode::AllZeroDistances, "no strictly positive distance");
    std::sort(positive.begin(), positive.end());
    const std::size_t k = positive.size();
    double median = k % 2 ? positive[k / 2] : 0.5 * (positive[k / 2 - 1] + positive[k / 2]);
    return std::numbers::ln2 / median;
}

std::optional<std::size_t> YearNetwork::index_of(std::string_view bank_id) const {
    auto it = std::find(roster.begin(), roster.end(), bank_id);
    if (it == roster.end()) return std::nullopt;
    return static_cast<std::size_t>(it - roster.begin());
}

std::vector<double> window_values(const IndexSeries& series, std::string_view bank_id, int year, int window) {
    std::vector<double> values;
    auto it = series.find(bank_id);
    if (it == series.end()) return values;
    for (const auto& p : it->second)
        if (p.year > year - window && p.year <= year) values.push_back(p.value);
    return values;
}

YearNetwork network_from_series(const IndexSeries& series, const std::vector<std::string>& roster, int year,
                                int window, std::optional<double> gamma) {
    const std::size_t n = roster.size();
    std::vector<std::vector<double>> paths(n);
    for (std::size_t i = 0; i < n; ++i) {
        paths[i] = window_values(series, roster[i], year, window);
        if (paths[i].empty())
            throw Error(ErrorCode::EmptySeries, "bank " + roster[i] + " has no index values in window");
    }

    Matrix distance(n, n);
    std::vector<double> pairwise;
    pairwise.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = dtw_distance(paths[i], paths[j]);
            distance(i, j) = distance(j, i) = d;
            pairwise.push_back(d);
        }

    YearNetwork net;
    net.year = year;
    net.roster = roster;
    if (gamma) {
        if (!(*gamma > 0.0)) throw Error(ErrorCode::InvalidInput, "gamma must be > 0");
        net.gamma = *gamma;
    } else {
        bool any_positive = std::any_of(pairwise.begin(), pairwise.end(), [](double d) { return d > 0.0; });
        net.gamma = any_positive ? median_gamma(pairwise) : 1.0;
    }
    net.adjacency = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        net.adjacency(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            // floor keeps weights strictly positive for far-apart pairs
            double w = std::max(similarity(distance(i, j), net.gamma), std::numeric_limits<double>::min());
            net.adjacency(i, j) = net.adjacency(j, i) = w;
        }
    }
    return net;
}

YearNetwork build_year_network(const BankPanel& panel, int year, int window, const CompositeIndexSpec& spec,
                               std::optional<double> gamma) {
    PanelSlice slice = panel_slice(panel, year, window, composite_observed(spec));
    IndexSeries series = composite_index(panel, spec);
    return network_from_series(series, slice.panel.roster(), year, window, gamma);
}

DynamicNetwork build_dynamic_network(const BankPanel& panel, int first_year, int last_year, int window,
                                     const CompositeIndexSpec& spec, std::optional<double> gamma) {
    if (last_year < first_year) throw Error(ErrorCode::InvalidInput, "empty year range");
    const auto& years = panel.years();
    if (years.empty() || first_year < years.front() || last_year > years.back())
        throw Error(ErrorCode::InvalidInput, "year range outside the panel");

    IndexSeries series = composite_index(panel, spec);
    auto observed = composite_observed(spec);

    std::map<int, std::vector<std::string>> qualifying;
    std::set<std::string> common(panel.roster().begin(), panel.roster().end());
    for (int y = first_year; y <= last_year; ++y) {
        std::vector<std::string> roster;
        if (std::binary_search(years.begin(), years.end(), y)) {
            try {
                roster = panel_slice(panel, y, window, observed).panel.roster();
            } catch (const Error& e) {
                if (e.code() != ErrorCode::EmptySlice) throw;
            }
        }
        std::set<std::string> keep(roster.begin(), roster.end());
        for (auto it = common.begin(); it != common.end();)
            it = keep.count(*it) ? std::next(it) : common.erase(it);
        qualifying[y] = std::move(roster);
    }
    if (common.empty()) throw Error(ErrorCode::EmptyRoster, "no bank qualifies in every year of the range");

    DynamicNetwork dyn;
    dyn.window = window;
    dyn.roster.assign(common.begin(), common.end());
    for (int y = first_year; y <= last_year; ++y) {
        const auto& q = qualifying[y];
        for (const auto& id : panel.roster()) {
            if (common.count(id)) continue;
            bool qualified = std::binary_search(q.begin(), q.end(), id);
            dyn.excluded.push_back({y, id, qualified ? "not_in_common_roster" : "insufficient_observations"});
        }
        dyn.networks.push_back(network_from_series(series, dyn.roster, y, window, gamma));
    }
    return dyn;
}

YearNetwork induced_subnetwork(const YearNetwork& network, const std::vector<std::string>& members) {
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < network.roster.size(); ++i)
        if (std::find(members.begin(), members.end(), network.roster[i]) != members.end()) index.push_back(i);
    YearNetwork sub;
    sub.year = network.year;
    sub.gamma = network.gamma;
    sub.adjacency = Matrix(index.size(), index.size());
    for (std::size_t a = 0; a < index.size(); ++a) {
        sub.roster.push_back(network.roster[index[a]]);
        for (std::size_t b = 0; b < index.size(); ++b) sub.adjacency(a, b) = network.adjacency(index[a], index[b]);
    }
    return sub;
}

TierSegments segment_by_tier(const YearNetwork& network, const BankPanel& panel) {
    std::vector<std::string> mega, large, regular;
    for (const auto& id : network.roster) {
        const auto* r = panel.find(id, network.year);
        if (!r) throw Error(ErrorCode::MissingAssets, id + " has no record in " + std::to_string(network.year));
        switch (classify_tier(r->total_assets)) {
        case AssetTier::Mega: mega.push_back(id); break;
        case AssetTier::Large: large.push_back(id); break;
        case AssetTier::Regular: regular.push_back(id); break;
        }
    }
    return {induced_subnetwork(network, mega), induced_subnetwork(network, large), induced_subnetwork(network, regular)};
}

NetworkStats network_stats(const YearNetwork& network, double threshold) {
    if (!(threshold >= 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidInput, "threshold must lie in [0, 1)");
    const std::size_t n = network.roster.size();
    NetworkStats stats;
    stats.year = network.year;
    stats.nodes = n;
    stats.weighted_degree.assign(n, 0.0);

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double w = network.adjacency(i, j);
            stats.weighted_degree[i] += w;
            if (j > i && w > threshold) {
                ++stats.edges;
                parent[find(i)] = find(j);
            }
        }
    for (std::size_t i = 0; i < n; ++i)
        if (find(i) == i) ++stats.components;
    std::size_t possible = n * (n - 1) / 2;
    stats.density = possible ? static_cast<double>(stats.edges) / static_cast<double>(possible) : 0.0;
    return stats;
}

void write_network_csv(std::ostream& os, const YearNetwork& network) {
    csv::write_row(os, {"year", "bank_i", "bank_j", "weight"});
    const std::string year = std::to_string(network.year);
    for (std::size_t i = 0; i < network.roster.size(); ++i)
        for (std::size_t j = i + 1; j < network.roster.size(); ++j)
            csv::write_row(os, {year, network.roster[i], network.roster[j], csv::format_number(network.adjacency(i, j))});
}

std::string network_json(const YearNetwork& network) {
    nlohmann::ordered_json doc;
    doc["year"] = network.year;
    doc["gamma"] = network.gamma;
    doc["roster"] = network.roster;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < network.roster.size(); ++i) {
        auto r = network.adjacency.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    doc["adjacency"] = std::move(rows);
    return doc.dump(1) + "\n";
}

} // namespace bridges
