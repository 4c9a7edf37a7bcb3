#pragma once

// Flat key=value run configuration. Keys carry their section as a dotted
// prefix (abm.alpha=0.5); lines starting with '#' are comments.

#include "bridges/abm.hpp"
#include "bridges/monte_carlo.hpp"
#include "bridges/panel.hpp"
#include "bridges/risk_metrics.hpp"
#include "bridges/temporal_gnn.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace bridges {

class Config {
public:
    static Config parse(std::string_view text);
    static Config load(const std::filesystem::path& path);

    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
    bool has(std::string_view key) const { return values_.find(key) != values_.end(); }
    std::optional<std::string> get(std::string_view key) const;
    const std::map<std::string, std::string, std::less<>>& values() const { return values_; }

private:
    std::map<std::string, std::string, std::less<>> values_;
};

struct RunConfig {
    std::optional<std::filesystem::path> input_path;
    std::optional<SyntheticPanelSpec> synthetic;
    ColumnMapping columns;

    double srisk_k = 0.08;
    int correlation_window = 5;

    int window = 5;
    std::optional<int> network_first_year; // default: first panel year + window - 1
    std::optional<int> network_last_year;  // default: last panel year
    std::optional<double> gamma;           // default: median heuristic
    double edge_threshold = 0.5;
    CompositeIndexSpec index;

    ModelConfig model;
    TrainOptions training;

    AbmParams abm;
    int scenario_year = 2018;
    std::vector<std::string> scenarios{"top_assets:5", "top_srisk_cs:5", "top_anomalous:5:tgnn", "geopolitical:all"};

    EnsembleSpec ensemble;

    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 42;
};

/// Builds a RunConfig; relative input paths resolve against `base_dir`.
/// Unknown keys and invalid values throw InvalidConfig.
RunConfig make_run_config(const Config& config, const std::filesystem::path& base_dir = {});

} // namespace bridges
