#include "bridges/monte_carlo.hpp"

#include "bridges/csv.hpp"
#include "bridges/error.hpp"
#include "bridges/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

namespace bridges {

std::string_view to_string(RiskLevel level) {
    switch (level) {
    case RiskLevel::Low: return "Low";
    case RiskLevel::Medium: return "Medium";
    case RiskLevel::High: return "High";
    case RiskLevel::Critical: return "Critical";
    }
    return "Critical";
}

RiskLevel classify_risk(double c, const RiskThresholds& t) {
    if (c >= t.low) return RiskLevel::Low;
    if (c >= t.medium) return RiskLevel::Medium;
    if (c >= t.high) return RiskLevel::High;
    return RiskLevel::Critical;
}

void EnsembleSpec::validate() const {
    if (n_runs < 1) throw Error(ErrorCode::InvalidConfig, "ensemble.n_runs must be >= 1");
    for (double h : {widths.alpha, widths.psi, widths.fire_sale_haircut, widths.shock_pct})
        if (!(h >= 0.0 && h < 1.0)) throw Error(ErrorCode::InvalidConfig, "perturbation half-widths must lie in [0, 1)");
    if (last_year < first_year) throw Error(ErrorCode::InvalidConfig, "ensemble year range is empty");
    if (!(thresholds.low > thresholds.medium && thresholds.medium > thresholds.high && thresholds.high > 0.0 &&
          thresholds.low <= 1.0))
        throw Error(ErrorCode::InvalidConfig, "risk thresholds must satisfy 1 >= low > medium > high > 0");
    base_params.validate();
}

AbmParams perturbed_params(const EnsembleSpec& spec, std::size_t run_index) {
    Rng rng(derive_seed(spec.master_seed, run_index));
    auto draw = [&](double p, double h) { return p * rng.uniform(1.0 - h, 1.0 + h); };
    AbmParams p = spec.base_params;
    p.alpha = std::clamp(draw(p.alpha, spec.widths.alpha), 0.0, 1.0);
    p.psi = std::max(0.0, draw(p.psi, spec.widths.psi));
    p.fire_sale_haircut = std::clamp(draw(p.fire_sale_haircut, spec.widths.fire_sale_haircut), 0.0, 0.999);
    p.shock_pct = std::clamp(draw(p.shock_pct, spec.widths.shock_pct), 0.0, 1.0);
    return p;
}

Quantiles quantiles(std::vector<double> v) {
    if (v.empty()) throw Error(ErrorCode::InvalidInput, "quantiles of an empty sample");
    std::sort(v.begin(), v.end());
    Quantiles q{};
    constexpr double probs[] = {0.05, 0.25, 0.50, 0.75, 0.95};
    for (std::size_t i = 0; i < 5; ++i) {
        double pos = probs[i] * static_cast<double>(v.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        std::size_t hi = std::min(lo + 1, v.size() - 1);
        double frac = pos - static_cast<double>(lo);
        q[i] = v[lo] + (v[hi] - v[lo]) * frac;
    }
    return q;
}

EnsembleResult run_ensemble(const EnsembleSpec& spec, const BankPanel& panel) {
    spec.validate();
    std::vector<Country> countries = spec.countries;
    if (countries.empty()) countries = panel.countries();
    std::sort(countries.begin(), countries.end());
    countries.erase(std::unique(countries.begin(), countries.end()), countries.end());

    EnsembleResult result;
    result.master_seed = spec.master_seed;
    result.n_runs = spec.n_runs;

    struct CellInput {
        std::vector<BankAgent> agents;
    };
    std::vector<CellInput> inputs;
    for (const auto& c : countries)
        for (int y = spec.first_year; y <= spec.last_year; ++y) {
            ShockScenario scenario;
            scenario.kind = ShockScenario::Kind::Geopolitical;
            scenario.country = c;
            scenario.year = y;
            EnsembleCell cell;
            cell.country = c;
            cell.year = y;
            cell.shocked = build_shock_set(scenario, panel);
            cell.runs.resize(spec.n_runs);
            inputs.push_back({init_agents(panel, y, spec.base_params)});
            result.cells.push_back(std::move(cell));
        }

    std::vector<AbmParams> params(spec.n_runs);
    for (std::size_t i = 0; i < spec.n_runs; ++i) params[i] = perturbed_params(spec, i);

    const std::size_t tasks = result.cells.size() * spec.n_runs;
    unsigned workers = spec.workers ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(tasks, 1)));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks;) {
            std::size_t c = t / spec.n_runs, i = t % spec.n_runs;
            try {
                // liquidity_fraction is not perturbed, so the cell's agents stay valid
                SimResult r = simulate(inputs[c].agents, result.cells[c].shocked, params[i]);
                result.cells[c].runs[i] = {i, params[i], r.deposit_loss_pct, r.failure_rate, r.capital_remaining_pct,
                                           r.steps_run};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = tasks;
            }
        }
    };
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (auto& cell : result.cells) {
        std::vector<double> loss, capital;
        for (const auto& r : cell.runs) {
            loss.push_back(r.deposit_loss_pct);
            capital.push_back(r.capital_remaining_pct);
        }
        cell.deposit_loss = quantiles(loss);
        cell.capital_remaining = quantiles(capital);
    }
    return result;
}

std::vector<RiskClassification> classification_table(const EnsembleResult& ensemble, const RiskThresholds& t) {
    std::vector<RiskClassification> out;
    for (const auto& cell : ensemble.cells) {
        if (cell.runs.empty())
            throw Error(ErrorCode::InvalidInput, "ensemble cell " + cell.country.name() + " " +
                                                     std::to_string(cell.year) + " has no runs");
        std::array<std::size_t, 4> counts{};
        double sum = 0.0;
        for (const auto& r : cell.runs) {
            ++counts[static_cast<std::size_t>(classify_risk(r.capital_remaining_pct, t))];
            sum += r.capital_remaining_pct;
        }
        RiskClassification rc;
        rc.country = cell.country;
        rc.year = cell.year;
        const auto n = static_cast<double>(cell.runs.size());
        for (std::size_t b = 0; b < 4; ++b) rc.probabilities[b] = static_cast<double>(counts[b]) / n;
        rc.mean_capital_remaining = sum / n;
        out.push_back(rc);
    }
    return out;
}

std::string ensemble_json(const EnsembleResult& ensemble) {
    using ojson = nlohmann::ordered_json;
    auto quant = [](const Quantiles& q) {
        return ojson{{"p05", q[0]}, {"p25", q[1]}, {"p50", q[2]}, {"p75", q[3]}, {"p95", q[4]}};
    };
    ojson doc;
    doc["master_seed"] = ensemble.master_seed;
    doc["n_runs"] = ensemble.n_runs;
    doc["cells"] = ojson::array();
    for (const auto& cell : ensemble.cells) {
        ojson c;
        c["country"] = cell.country.name();
        c["year"] = cell.year;
        c["shocked"] = cell.shocked;
        c["deposit_loss"] = quant(cell.deposit_loss);
        c["capital_remaining"] = quant(cell.capital_remaining);
        ojson runs = ojson::array();
        for (const auto& r : cell.runs)
            runs.push_back({{"run", r.run_index},
                            {"alpha", r.params.alpha},
                            {"psi", r.params.psi},
                            {"fire_sale_haircut", r.params.fire_sale_haircut},
                            {"shock_pct", r.params.shock_pct},
                            {"deposit_loss_pct", r.deposit_loss_pct},
                            {"failure_rate", r.failure_rate},
                            {"capital_remaining_pct", r.capital_remaining_pct},
                            {"steps_run", r.steps_run}});
        c["runs"] = std::move(runs);
        doc["cells"].push_back(std::move(c));
    }
    return doc.dump(1) + "\n";
}

void write_classification_csv(std::ostream& os, const std::vector<RiskClassification>& table) {
    std::set<int> years;
    std::vector<Country> countries;
    for (const auto& rc : table) {
        years.insert(rc.year);
        if (std::find(countries.begin(), countries.end(), rc.country) == countries.end())
            countries.push_back(rc.country);
    }
    std::vector<std::string> header{"country", "band"};
    for (int y : years) header.push_back(std::to_string(y));
    csv::write_row(os, header);
    for (const auto& c : countries)
        for (std::size_t b = 0; b < 4; ++b) {
            std::vector<std::string> row{c.name(), std::string(to_string(static_cast<RiskLevel>(b)))};
            for (int y : years) {
                auto it = std::find_if(table.begin(), table.end(),
                                       [&](const RiskClassification& rc) { return rc.country == c && rc.year == y; });
                row.push_back(it == table.end() ? "" : csv::format_number(it->probabilities[b]));
            }
            csv::write_row(os, row);
        }
}

} // namespace bridges
