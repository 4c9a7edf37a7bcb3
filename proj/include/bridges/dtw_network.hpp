#pragma once

// Bank-similarity networks: DTW distances between composite risk-index
// series, mapped to edge weights by an exponential kernel, one network per
// year of a rolling window.

#include "bridges/matrix.hpp"
#include "bridges/panel.hpp"
#include "bridges/risk_metrics.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bridges {

/// Unconstrained DTW with absolute-difference local cost. Works on unequal
/// lengths; throws EmptySeries if either input is empty.
double dtw_distance(std::span<const double> a, std::span<const double> b);

/// exp(-gamma * distance).
double similarity(double distance, double gamma);

/// ln(2) / median of the strictly positive distances (even count: mean of the
/// two middle values), so the median pair gets weight 0.5.
double median_gamma(std::span<const double> distances);

struct YearNetwork {
    int year = 0;
    std::vector<std::string> roster;
    Matrix adjacency; // symmetric, unit diagonal, entries in (0, 1]
    double gamma = 1.0;

    std::optional<std::size_t> index_of(std::string_view bank_id) const;
};

struct NetworkExclusion {
    int year;
    std::string bank_id;
    std::string reason; // "insufficient_observations" or "not_in_common_roster"
};

struct DynamicNetwork {
    std::vector<YearNetwork> networks; // contiguous years, shared roster
    int window = 0;
    std::vector<std::string> roster;
    std::vector<NetworkExclusion> excluded;
};

/// Index values of `bank_id` with year in [year - window + 1, year].
std::vector<double> window_values(const IndexSeries& series, std::string_view bank_id, int year, int window);

/// Network over an explicit roster; gamma defaults to the median heuristic
/// (1.0 when no pair has a positive distance, where every weight is 1 anyway).
YearNetwork network_from_series(const IndexSeries& series, const std::vector<std::string>& roster, int year,
                                int window, std::optional<double> gamma = std::nullopt);

YearNetwork build_year_network(const BankPanel& panel, int year, int window, const CompositeIndexSpec& spec,
                               std::optional<double> gamma = std::nullopt);

/// One network per year in [first_year, last_year] over the banks that
/// qualify in every year; throws EmptyRoster when that intersection is empty.
DynamicNetwork build_dynamic_network(const BankPanel& panel, int first_year, int last_year, int window,
                                     const CompositeIndexSpec& spec, std::optional<double> gamma = std::nullopt);

struct TierSegments {
    YearNetwork mega;
    YearNetwork large;
    YearNetwork regular;
};

/// Induced subgraphs by that year's asset tier; throws MissingAssets.
TierSegments segment_by_tier(const YearNetwork& network, const BankPanel& panel);

/// Induced subgraph on `members` (kept in the network's roster order).
YearNetwork induced_subnetwork(const YearNetwork& network, const std::vector<std::string>& members);

struct NetworkStats {
    int year = 0;
    std::size_t nodes = 0;
    std::size_t edges = 0;
    double density = 0.0;
    std::size_t components = 0;
    std::vector<double> weighted_degree; // roster order, diagonal excluded
};

/// Edges are pairs with weight strictly above `threshold`.
NetworkStats network_stats(const YearNetwork& network, double threshold);

/// Long format: year,bank_i,bank_j,weight over i < j.
void write_network_csv(std::ostream& os, const YearNetwork& network);
std::string network_json(const YearNetwork& network);

} // namespace bridges
