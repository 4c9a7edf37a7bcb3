#pragma once

// Agent-based bank-run simulator. Each bank holds capital, deposits, cash and
// illiquid assets. A capital shock hits a chosen set of banks; fear
// (peak fractional capital loss, never decreasing) drives deposit withdrawals,
// withdrawals beyond cash force fire sales at a haircut, and fire-sale losses
// erode capital until banks fail. Contagion runs only through the fear
// channel; there are no interbank exposures.

#include "bridges/panel.hpp"
#include "bridges/temporal_gnn.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bridges {

struct BankAgent {
    std::string bank_id;
    Country country;
    double capital = 0.0;
    double initial_capital = 0.0; // pre-shock; the fear denominator
    double deposits = 0.0;
    double cash = 0.0;
    double illiquid_assets = 0.0;
    double fear = 0.0;
    bool alive = true;
    bool pre_failed = false; // non-positive equity in the source data

    bool operator==(const BankAgent&) const = default;
};

struct AbmParams {
    double alpha = 0.5;              // weight of own fear vs systemic fear
    double psi = 0.1;                // panic sensitivity (per-step fraction)
    double shock_pct = 0.5;
    double fire_sale_haircut = 0.3;  // delta
    double liquidity_fraction = 0.1; // lambda, cash share of assets
    int horizon = 50;
    double stop_epsilon = 1e-4;

    /// Throws InvalidConfig naming the offending field.
    void validate() const;
    bool operator==(const AbmParams&) const = default;
};

struct ShockScenario {
    enum class Kind { TopAssets, TopSriskCs, TopAnomalous, Geopolitical };

    Kind kind = Kind::TopAssets;
    std::size_t k = 5;
    AnomalyMethod method = AnomalyMethod::TGNN;
    Country country;
    int year = 0;
    std::optional<double> shock_pct;

    /// Stable file-name friendly label: top_assets_5, top_srisk_cs_5,
    /// top_anomalous_tgnn_5, geopolitical_russia.
    std::string name() const;

    /// Inverse of the `kind[:arg[:arg]]` config form, e.g. "top_assets:5",
    /// "top_anomalous:5:baseline", "geopolitical:China". Also accepts name().
    static ShockScenario parse(std::string_view text, int year);
};

/// Agents for every bank with a record in `year`. Banks with non-positive
/// equity start failed with fear 1 and an epsilon capital base.
std::vector<BankAgent> init_agents(const BankPanel& panel, int year, const AbmParams& params);

/// Members of the shocked set, in selection order. `anomaly` is required for
/// TopAnomalous scenarios.
std::vector<std::string> build_shock_set(const ShockScenario& scenario, const BankPanel& panel,
                                         const AnomalyReport* anomaly = nullptr, double srisk_k = 0.08);

void apply_shock(std::vector<BankAgent>& agents, const std::vector<std::string>& shocked, double shock_pct);

/// max(previous fear, 1 - capital / initial_capital), clamped to [0, 1];
/// failed banks hold 1.
double update_fear(const BankAgent& agent);

double compute_withdrawal(const BankAgent& agent, double systemic_fear, const AbmParams& params);

/// How one withdrawal was paid.
struct SettlementLedger {
    double outflow = 0.0;
    double cash_paid = 0.0;
    double fire_sale_proceeds = 0.0;
    double written_off = 0.0;
    double assets_sold = 0.0;
    double capital_loss = 0.0;
};

SettlementLedger settle_withdrawal(BankAgent& agent, double amount, const AbmParams& params);

struct TraceRow {
    int tau = 0;
    double total_deposits = 0.0; // live banks only
    double total_capital = 0.0;
    double systemic_fear = 0.0;
    std::size_t failures = 0;
    double withdrawals = 0.0;
};

struct SimulationState {
    std::vector<BankAgent> agents;
    int tau = 0;
    double initial_deposits = 0.0; // live banks at setup
    double initial_capital = 0.0;  // pre-shock, all banks
    std::vector<TraceRow> trace;
};

/// Mean fear over the banks alive before the shock (failed ones count as 1).
double systemic_fear(const std::vector<BankAgent>& agents);

/// init + shock + fear update + insolvency check; trace row 0.
SimulationState setup_simulation(std::vector<BankAgent> agents, const std::vector<std::string>& shocked,
                                 double shock_pct);

struct StepOutcome {
    double withdrawals = 0.0;
    std::vector<SettlementLedger> ledgers; // agent order; zero for failed banks
};

StepOutcome step(SimulationState& state, const AbmParams& params);

struct BankOutcome {
    std::string bank_id;
    bool alive;
    double capital;
    double deposits;
    double fear;
};

struct SimResult {
    std::string scenario;
    int year = 0;
    AbmParams params;
    std::vector<std::string> shocked;
    double deposit_loss_pct = 0.0;
    double failure_rate = 0.0;
    double capital_remaining_pct = 0.0;
    int steps_run = 0;
    std::vector<TraceRow> trace;
    std::vector<BankOutcome> banks;
};

/// Runs to the horizon or until one step withdraws less than
/// stop_epsilon * initial deposits.
SimResult simulate(const std::vector<BankAgent>& agents, const std::vector<std::string>& shocked,
                   const AbmParams& params);

SimResult run_simulation(const BankPanel& panel, const ShockScenario& scenario, const AbmParams& params,
                         const AnomalyReport* anomaly = nullptr);

std::string sim_result_json(const SimResult& result);
void write_trace_csv(std::ostream& os, const SimResult& result);

} // namespace bridges
