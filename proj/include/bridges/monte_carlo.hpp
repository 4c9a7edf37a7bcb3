#pragma once

// Monte Carlo ensembles over perturbed ABM parameters and the country-level
// risk classification built from them.
//
// Run i draws its parameters from derive_seed(master_seed, i), so a run's
// outcome does not depend on how many other runs exist or on which worker
// executes it. The same run i parameters are used for every (country, year)
// cell.

#include "bridges/abm.hpp"
#include "bridges/panel.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace bridges {

/// Relative half-widths: parameter p is drawn from U(p(1-h), p(1+h)).
struct PerturbationWidths {
    double alpha = 0.10;
    double psi = 0.10;
    double fire_sale_haircut = 0.10;
    double shock_pct = 0.10;
};

enum class RiskLevel { Low, Medium, High, Critical };

std::string_view to_string(RiskLevel level);

struct RiskThresholds {
    double low = 0.80;    // capital remaining >= low -> Low
    double medium = 0.60; // [medium, low) -> Medium
    double high = 0.30;   // [high, medium) -> High, below -> Critical
};

RiskLevel classify_risk(double mean_capital_remaining, const RiskThresholds& thresholds = {});

struct EnsembleSpec {
    std::size_t n_runs = 500;
    AbmParams base_params;
    PerturbationWidths widths;
    std::uint64_t master_seed = 42;
    std::vector<Country> countries; // empty: every country in the panel
    int first_year = 2018;
    int last_year = 2024;
    unsigned workers = 0; // 0: hardware concurrency
    RiskThresholds thresholds;

    void validate() const;
};

/// Parameters for run `run_index`; depends only on (spec, run_index).
AbmParams perturbed_params(const EnsembleSpec& spec, std::size_t run_index);

struct RunRecord {
    std::size_t run_index;
    AbmParams params;
    double deposit_loss_pct;
    double failure_rate;
    double capital_remaining_pct;
    int steps_run;
};

/// 5th, 25th, 50th, 75th and 95th percentiles (linear interpolation).
using Quantiles = std::array<double, 5>;

Quantiles quantiles(std::vector<double> values);

struct EnsembleCell {
    Country country;
    int year = 0;
    std::vector<std::string> shocked;
    std::vector<RunRecord> runs; // run-index order
    Quantiles deposit_loss{};
    Quantiles capital_remaining{};
};

struct EnsembleResult {
    std::uint64_t master_seed = 0;
    std::size_t n_runs = 0;
    std::vector<EnsembleCell> cells; // country name, then year
};

/// Geopolitical(country) shocks for every country and year of the spec.
EnsembleResult run_ensemble(const EnsembleSpec& spec, const BankPanel& panel);

struct RiskClassification {
    Country country;
    int year = 0;
    std::array<double, 4> probabilities{}; // Low, Medium, High, Critical
    double mean_capital_remaining = 0.0;
};

/// Per cell: share of runs whose capital remaining falls in each band.
std::vector<RiskClassification> classification_table(const EnsembleResult& ensemble,
                                                     const RiskThresholds& thresholds = {});

std::string ensemble_json(const EnsembleResult& ensemble);

/// Wide layout: country,band,<year>,<year>,... with one row per band.
void write_classification_csv(std::ostream& os, const std::vector<RiskClassification>& table);

} // namespace bridges
