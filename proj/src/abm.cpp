#include "bridges/abm.hpp"

#include "bridges/csv.hpp"
#include "bridges/error.hpp"
#include "bridges/risk_metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>

namespace bridges {

namespace {

constexpr double kCapitalFloor = 1e-9;

std::string lower_label(std::string s) {
    for (auto& ch : s) ch = ch == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

void require(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidConfig, std::string("abm.") + what);
}

} // namespace

void AbmParams::validate() const {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    require(psi >= 0.0 && std::isfinite(psi), "psi must be finite and >= 0");
    require(shock_pct >= 0.0 && shock_pct <= 1.0, "shock_pct must lie in [0, 1]");
    require(fire_sale_haircut >= 0.0 && fire_sale_haircut < 1.0, "fire_sale_haircut must lie in [0, 1)");
    require(liquidity_fraction > 0.0 && liquidity_fraction <= 1.0, "liquidity_fraction must lie in (0, 1]");
    require(horizon >= 0, "horizon must be >= 0");
    require(stop_epsilon >= 0.0 && stop_epsilon < 1.0, "stop_epsilon must lie in [0, 1)");
}

std::string ShockScenario::name() const {
    switch (kind) {
    case Kind::TopAssets: return "top_assets_" + std::to_string(k);
    case Kind::TopSriskCs: return "top_srisk_cs_" + std::to_string(k);
    case Kind::TopAnomalous: return "top_anomalous_" + lower_label(std::string(to_string(method))) + "_" + std::to_string(k);
    case Kind::Geopolitical: return "geopolitical_" + lower_label(country.name());
    }
    return "unknown";
}

ShockScenario ShockScenario::parse(std::string_view text, int year) {
    std::vector<std::string> parts;
    std::string current;
    for (char ch : text) {
        if (ch == ':') {
            parts.push_back(current);
            current.clear();
        } else {
            current += ch;
        }
    }
    parts.push_back(current);

    auto fail = [&] { return Error(ErrorCode::InvalidConfig, "bad scenario '" + std::string(text) + "'"); };
    auto parse_k = [&](const std::string& s) {
        auto v = csv::parse_number(s);
        if (!v || *v < 1 || *v != std::floor(*v)) throw fail();
        return static_cast<std::size_t>(*v);
    };

    // accept the name() form by splitting the trailing count / country
    std::string head = parts[0];
    if (parts.size() == 1) {
        for (std::string prefix : {"top_anomalous_tgnn_", "top_anomalous_baseline_", "top_srisk_cs_", "top_assets_"})
            if (head.rfind(prefix, 0) == 0) {
                std::string kind = prefix.substr(0, prefix.size() - 1);
                std::string method;
                if (kind.rfind("top_anomalous_", 0) == 0) {
                    method = kind.substr(14);
                    kind = "top_anomalous";
                }
                parts = {kind, head.substr(prefix.size())};
                if (!method.empty()) parts.push_back(method);
                break;
            }
        if (head.rfind("geopolitical_", 0) == 0) parts = {"geopolitical", head.substr(13)};
    }

    ShockScenario s;
    s.year = year;
    const std::string& kind = parts[0];
    if (kind == "top_assets" || kind == "top_srisk_cs") {
        s.kind = kind == "top_assets" ? Kind::TopAssets : Kind::TopSriskCs;
        if (parts.size() > 2) throw fail();
        if (parts.size() == 2) s.k = parse_k(parts[1]);
    } else if (kind == "top_anomalous") {
        s.kind = Kind::TopAnomalous;
        if (parts.size() > 3) throw fail();
        if (parts.size() >= 2) s.k = parse_k(parts[1]);
        if (parts.size() == 3) {
            auto m = parse_anomaly_method(parts[2]);
            if (!m) throw fail();
            s.method = *m;
        }
    } else if (kind == "geopolitical") {
        if (parts.size() != 2 || parts[1].empty()) throw fail();
        s.kind = Kind::Geopolitical;
        s.country = Country::parse(parts[1]);
    } else {
        throw fail();
    }
    return s;
}

std::vector<BankAgent> init_agents(const BankPanel& panel, int year, const AbmParams& params) {
    params.validate();
    auto recs = panel.records_in_year(year);
    if (recs.empty()) throw Error(ErrorCode::InvalidInput, "no records in " + std::to_string(year));
    std::vector<BankAgent> agents;
    for (const auto* r : recs) {
        for (auto [value, field] : {std::pair{r->total_equity, "total_equity"},
                                    std::pair{r->total_assets, "total_assets"},
                                    std::pair{r->total_customer_deposits, "total_customer_deposits"}})
            if (!std::isfinite(value)) throw Error(ErrorCode::MissingField, r->bank_id + ": " + field);
        BankAgent a;
        a.bank_id = r->bank_id;
        a.country = r->country;
        a.capital = r->total_equity;
        if (!(a.capital > 0.0)) {
            a.capital = kCapitalFloor;
            a.alive = false;
            a.pre_failed = true;
            a.fear = 1.0;
        }
        a.initial_capital = a.capital;
        a.deposits = std::max(0.0, r->total_customer_deposits);
        a.cash = params.liquidity_fraction * r->total_assets;
        a.illiquid_assets = std::max(0.0, r->total_assets - a.cash);
        agents.push_back(std::move(a));
    }
    return agents;
}

std::vector<std::string> build_shock_set(const ShockScenario& scenario, const BankPanel& panel,
                                         const AnomalyReport* anomaly, double srisk_k) {
    using Kind = ShockScenario::Kind;
    auto recs = panel.records_in_year(scenario.year);
    if (recs.empty()) throw Error(ErrorCode::InvalidInput, "no records in " + std::to_string(scenario.year));
    if (scenario.kind != Kind::Geopolitical && scenario.k < 1)
        throw Error(ErrorCode::InvalidInput, "k must be >= 1");

    auto top_by = [&](auto key) {
        if (recs.size() < scenario.k)
            throw Error(ErrorCode::InsufficientBanks, std::to_string(recs.size()) + " banks in " +
                                                          std::to_string(scenario.year) + ", need " +
                                                          std::to_string(scenario.k));
        std::vector<std::pair<double, std::string>> ranked;
        for (const auto* r : recs) ranked.emplace_back(key(*r), r->bank_id);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<std::string> out;
        for (std::size_t i = 0; i < scenario.k; ++i) out.push_back(ranked[i].second);
        return out;
    };

    switch (scenario.kind) {
    case Kind::TopAssets:
        return top_by([](const BankYearRecord& r) { return r.total_assets; });
    case Kind::TopSriskCs:
        return top_by([&](const BankYearRecord& r) { return srisk_cs(r.total_liabilities, r.total_equity, srisk_k); });
    case Kind::TopAnomalous: {
        if (!anomaly)
            throw Error(ErrorCode::MissingAnomalyReport, scenario.name() + " needs an anomaly report; run `anomaly` first");
        auto ids = top_k(*anomaly, scenario.year, scenario.k, scenario.method);
        for (const auto& id : ids)
            if (!panel.find(id, scenario.year))
                throw Error(ErrorCode::UnknownBank, id + " has no record in " + std::to_string(scenario.year));
        return ids;
    }
    case Kind::Geopolitical: {
        std::vector<std::string> out;
        for (const auto* r : recs)
            if (r->country == scenario.country && r->total_equity > 0.0) out.push_back(r->bank_id);
        if (out.empty())
            throw Error(ErrorCode::InsufficientBanks,
                        "no live " + scenario.country.name() + " bank in " + std::to_string(scenario.year));
        return out;
    }
    }
    return {};
}

void apply_shock(std::vector<BankAgent>& agents, const std::vector<std::string>& shocked, double shock_pct) {
    if (!(shock_pct >= 0.0 && shock_pct <= 1.0)) throw Error(ErrorCode::InvalidInput, "shock_pct must lie in [0, 1]");
    for (const auto& id : shocked) {
        auto it = std::find_if(agents.begin(), agents.end(), [&](const BankAgent& a) { return a.bank_id == id; });
        if (it == agents.end()) throw Error(ErrorCode::UnknownBank, id);
        if (it->alive) it->capital *= 1.0 - shock_pct;
    }
}

double update_fear(const BankAgent& agent) {
    if (!agent.alive) return 1.0;
    double loss = 1.0 - agent.capital / agent.initial_capital;
    return std::clamp(std::max(agent.fear, loss), 0.0, 1.0);
}

double compute_withdrawal(const BankAgent& agent, double fsys, const AbmParams& params) {
    if (!agent.alive) return 0.0;
    double w = agent.deposits * (params.alpha * agent.fear + (1.0 - params.alpha) * fsys) * params.psi;
    return std::clamp(w, 0.0, agent.deposits);
}

SettlementLedger settle_withdrawal(BankAgent& agent, double amount, const AbmParams& params) {
    SettlementLedger led;
    amount = std::min(amount, agent.deposits);
    if (!(amount > 0.0)) return led;
    led.outflow = amount;
    agent.deposits -= amount;

    led.cash_paid = std::min(agent.cash, amount);
    agent.cash -= led.cash_paid;
    double shortfall = amount - led.cash_paid;
    if (shortfall <= 0.0) return led;

    const double delta = params.fire_sale_haircut;
    double needed = shortfall / (1.0 - delta);
    if (needed <= agent.illiquid_assets) {
        led.assets_sold = needed;
        led.fire_sale_proceeds = shortfall;
    } else {
        led.assets_sold = agent.illiquid_assets;
        led.fire_sale_proceeds = led.assets_sold * (1.0 - delta);
        led.written_off = shortfall - led.fire_sale_proceeds;
    }
    agent.illiquid_assets = std::max(0.0, agent.illiquid_assets - led.assets_sold);
    led.capital_loss = led.assets_sold - led.fire_sale_proceeds + led.written_off;
    agent.capital -= led.capital_loss;
    return led;
}

double systemic_fear(const std::vector<BankAgent>& agents) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& a : agents) {
        if (a.pre_failed) continue;
        sum += a.alive ? a.fear : 1.0;
        ++n;
    }
    return n ? std::clamp(sum / static_cast<double>(n), 0.0, 1.0) : 0.0;
}

namespace {

void check_insolvency(std::vector<BankAgent>& agents) {
    for (auto& a : agents)
        if (a.alive && a.capital <= 0.0) {
            a.alive = false;
            a.fear = 1.0;
        }
}

TraceRow trace_row(const SimulationState& s, double withdrawals) {
    TraceRow row;
    row.tau = s.tau;
    row.withdrawals = withdrawals;
    row.systemic_fear = systemic_fear(s.agents);
    for (const auto& a : s.agents) {
        row.total_capital += a.capital;
        if (a.alive) row.total_deposits += a.deposits;
        else ++row.failures;
    }
    return row;
}

} // namespace

SimulationState setup_simulation(std::vector<BankAgent> agents, const std::vector<std::string>& shocked,
                                 double shock_pct) {
    SimulationState s;
    for (const auto& a : agents) {
        s.initial_capital += a.capital;
        if (a.alive) s.initial_deposits += a.deposits;
    }
    s.agents = std::move(agents);
    apply_shock(s.agents, shocked, shock_pct);
    for (auto& a : s.agents)
        if (a.alive) a.fear = update_fear(a);
    check_insolvency(s.agents);
    s.trace.push_back(trace_row(s, 0.0));
    return s;
}

StepOutcome step(SimulationState& state, const AbmParams& params) {
    StepOutcome out;
    const double fsys = systemic_fear(state.agents);
    std::vector<double> amounts;
    amounts.reserve(state.agents.size());
    for (const auto& a : state.agents) amounts.push_back(compute_withdrawal(a, fsys, params));

    out.ledgers.resize(state.agents.size());
    for (std::size_t i = 0; i < state.agents.size(); ++i) {
        auto& a = state.agents[i];
        if (!a.alive) continue;
        out.ledgers[i] = settle_withdrawal(a, amounts[i], params);
        out.withdrawals += out.ledgers[i].outflow;
    }
    for (auto& a : state.agents)
        if (a.alive) a.fear = update_fear(a);
    check_insolvency(state.agents);
    ++state.tau;
    state.trace.push_back(trace_row(state, out.withdrawals));
    return out;
}

SimResult simulate(const std::vector<BankAgent>& agents, const std::vector<std::string>& shocked,
                   const AbmParams& params) {
    params.validate();
    SimulationState state = setup_simulation(agents, shocked, params.shock_pct);
    SimResult result;
    result.params = params;
    result.shocked = shocked;
    while (state.tau < params.horizon) {
        StepOutcome o = step(state, params);
        if (o.withdrawals < params.stop_epsilon * state.initial_deposits) break;
    }
    result.steps_run = state.tau;

    std::size_t failed = 0;
    double live_deposits = 0.0, final_capital = 0.0;
    for (const auto& a : state.agents) {
        final_capital += a.capital;
        if (a.alive) live_deposits += a.deposits;
        else ++failed;
        result.banks.push_back({a.bank_id, a.alive, a.capital, a.deposits, a.fear});
    }
    const double n = static_cast<double>(state.agents.size());
    result.deposit_loss_pct =
        state.initial_deposits > 0.0 ? std::clamp(1.0 - live_deposits / state.initial_deposits, 0.0, 1.0) : 0.0;
    result.failure_rate = n > 0 ? static_cast<double>(failed) / n : 0.0;
    result.capital_remaining_pct =
        state.initial_capital > 0.0 ? std::clamp(std::max(0.0, final_capital) / state.initial_capital, 0.0, 1.0) : 0.0;
    result.trace = std::move(state.trace);
    return result;
}

SimResult run_simulation(const BankPanel& panel, const ShockScenario& scenario, const AbmParams& params,
                         const AnomalyReport* anomaly) {
    AbmParams effective = params;
    if (scenario.shock_pct) effective.shock_pct = *scenario.shock_pct;
    auto agents = init_agents(panel, scenario.year, effective);
    auto shocked = build_shock_set(scenario, panel, anomaly);
    SimResult r = simulate(agents, shocked, effective);
    r.scenario = scenario.name();
    r.year = scenario.year;
    return r;
}

std::string sim_result_json(const SimResult& r) {
    nlohmann::ordered_json doc;
    doc["scenario"] = r.scenario;
    doc["year"] = r.year;
    doc["params"] = {{"alpha", r.params.alpha},
                     {"psi", r.params.psi},
                     {"shock_pct", r.params.shock_pct},
                     {"fire_sale_haircut", r.params.fire_sale_haircut},
                     {"liquidity_fraction", r.params.liquidity_fraction},
                     {"horizon", r.params.horizon},
                     {"stop_epsilon", r.params.stop_epsilon}};
    doc["shocked"] = r.shocked;
    doc["deposit_loss_pct"] = r.deposit_loss_pct;
    doc["failure_rate"] = r.failure_rate;
    doc["capital_remaining_pct"] = r.capital_remaining_pct;
    doc["steps_run"] = r.steps_run;
    auto banks = nlohmann::ordered_json::array();
    for (const auto& b : r.banks)
        banks.push_back({{"bank_id", b.bank_id},
                         {"alive", b.alive},
                         {"capital", b.capital},
                         {"deposits", b.deposits},
                         {"fear", b.fear}});
    doc["banks"] = std::move(banks);
    return doc.dump(1) + "\n";
}

void write_trace_csv(std::ostream& os, const SimResult& r) {
    csv::write_row(os, {"tau", "total_deposits", "total_capital", "systemic_fear", "failures", "withdrawals"});
    for (const auto& t : r.trace)
        csv::write_row(os, {std::to_string(t.tau), csv::format_number(t.total_deposits),
                            csv::format_number(t.total_capital), csv::format_number(t.systemic_fear),
                            std::to_string(t.failures), csv::format_number(t.withdrawals)});
}

} // namespace bridges
