#include "bridges/cli.hpp"

#include "bridges/csv.hpp"
#include "bridges/dtw_network.hpp"
#include "bridges/error.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace bridges::cli {

namespace fs = std::filesystem;

namespace {

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("BRIDGES_LOG");
        std::string v = env ? env : "info";
        if (v == "quiet" || v == "error") return 0;
        if (v == "debug") return 2;
        return 1;
    }();
    return level;
}

void log(int level, const std::string& message) {
    if (level <= log_level()) std::cerr << "[bridges] " << message << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
    log(2, "wrote " + path.string());
}

template <class F>
void write_with(const fs::path& path, F&& body) {
    std::ostringstream os;
    body(os);
    write_text(path, os.str());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

fs::path require_output(const RunConfig& rc, const std::string& name, const std::string& stage) {
    fs::path p = rc.output_dir / name;
    if (!fs::exists(p)) throw Error(ErrorCode::MissingStageOutput, name + " not found; run `" + stage + "` first");
    return p;
}

BankPanel stage_panel(const RunConfig& rc) {
    return load_panel(require_output(rc, "panel.csv", "synth` or `ingest"));
}

std::pair<int, int> network_years(const RunConfig& rc, const BankPanel& panel) {
    const auto& years = panel.years();
    if (years.empty()) throw Error(ErrorCode::InvalidInput, "panel has no years");
    int first = rc.network_first_year.value_or(std::min(years.front() + rc.window - 1, years.back()));
    int last = rc.network_last_year.value_or(years.back());
    return {first, last};
}

DynamicNetwork stage_dynamic_network(const RunConfig& rc, const BankPanel& panel) {
    auto [first, last] = network_years(rc, panel);
    return build_dynamic_network(panel, first, last, rc.window, rc.index, rc.gamma);
}

std::string fmt(double v) { return csv::format_number(v); }

const csv::Table read_table(const fs::path& path) { return csv::parse(read_text(path)); }

std::size_t column(const csv::Table& t, std::string_view name, const fs::path& path) {
    auto c = t.column(name);
    if (!c) throw Error(ErrorCode::MissingColumn, std::string(name) + " in " + path.filename().string());
    return *c;
}

std::vector<ShockScenario> expand_scenarios(const std::vector<std::string>& names, int year, const BankPanel& panel) {
    std::vector<ShockScenario> out;
    for (const auto& name : names) {
        if (name == "geopolitical:all") {
            for (const auto& c : panel.countries()) out.push_back(ShockScenario::parse("geopolitical:" + c.name(), year));
        } else {
            out.push_back(ShockScenario::parse(name, year));
        }
    }
    return out;
}

} // namespace

void stage_ingest(const RunConfig& rc) {
    if (!rc.input_path) throw Error(ErrorCode::InvalidConfig, "ingest needs input.path");
    BankPanel panel = load_panel(*rc.input_path, rc.columns);
    write_with(rc.output_dir / "panel.csv", [&](std::ostream& os) { save_panel(panel, os); });
    log(1, "ingest: " + std::to_string(panel.records().size()) + " records, " + std::to_string(panel.roster().size()) +
               " banks");
}

void stage_synth(const RunConfig& rc) {
    if (!rc.synthetic) throw Error(ErrorCode::InvalidConfig, "synth needs synth.* keys");
    BankPanel panel = generate_synthetic_panel(*rc.synthetic);
    write_with(rc.output_dir / "panel.csv", [&](std::ostream& os) { save_panel(panel, os); });
    log(1, "synth: " + std::to_string(panel.roster().size()) + " banks over " +
               std::to_string(panel.years().size()) + " years");
}

void stage_metrics(const RunConfig& rc) {
    BankPanel panel = stage_panel(rc);
    auto rows = risk_ratios(panel, rc.srisk_k);
    write_with(rc.output_dir / "metrics.csv", [&](std::ostream& os) { write_risk_ratios(os, rows); });
    write_with(rc.output_dir / "aggregate_srisk.csv", [&](std::ostream& os) {
        csv::write_row(os, {"country", "year", "srisk_cs"});
        for (const auto& v : country_aggregate_srisk(rows))
            csv::write_row(os, {v.country.name(), std::to_string(v.year), fmt(v.value)});
    });
    write_with(rc.output_dir / "rolling_correlation.csv", [&](std::ostream& os) {
        csv::write_row(os, {"year", "mean_profit_correlation"});
        for (const auto& v : rolling_profit_correlation(panel, rc.correlation_window))
            csv::write_row(os, {std::to_string(v.year), csv::format_optional(v.value)});
    });
    log(1, "metrics: " + std::to_string(rows.size()) + " bank-years");
}

void stage_network(const RunConfig& rc) {
    BankPanel panel = stage_panel(rc);
    DynamicNetwork dyn = stage_dynamic_network(rc, panel);
    std::ostringstream stats, segments;
    csv::write_row(stats, {"year", "nodes", "edges", "density", "components", "mean_weighted_degree"});
    csv::write_row(segments, {"year", "tier", "nodes", "edges", "density", "components"});
    auto stat_fields = [](const NetworkStats& s) {
        return std::vector<std::string>{std::to_string(s.nodes), std::to_string(s.edges), fmt(s.density),
                                        std::to_string(s.components)};
    };
    for (const auto& net : dyn.networks) {
        const std::string y = std::to_string(net.year);
        write_with(rc.output_dir / ("network_" + y + ".csv"), [&](std::ostream& os) { write_network_csv(os, net); });
        write_text(rc.output_dir / ("network_" + y + ".json"), network_json(net));
        NetworkStats s = network_stats(net, rc.edge_threshold);
        double mean_degree = 0.0;
        for (double d : s.weighted_degree) mean_degree += d;
        if (!s.weighted_degree.empty()) mean_degree /= static_cast<double>(s.weighted_degree.size());
        auto row = stat_fields(s);
        row.insert(row.begin(), y);
        row.push_back(fmt(mean_degree));
        csv::write_row(stats, row);

        TierSegments seg = segment_by_tier(net, panel);
        for (auto [tier, sub] : {std::pair{AssetTier::Mega, &seg.mega}, std::pair{AssetTier::Large, &seg.large},
                                 std::pair{AssetTier::Regular, &seg.regular}}) {
            auto srow = stat_fields(network_stats(*sub, rc.edge_threshold));
            srow.insert(srow.begin(), {y, std::string(to_string(tier))});
            csv::write_row(segments, srow);
        }
    }
    write_text(rc.output_dir / "network_stats.csv", stats.str());
    write_text(rc.output_dir / "network_segments.csv", segments.str());
    write_with(rc.output_dir / "network_exclusions.csv", [&](std::ostream& os) {
        csv::write_row(os, {"year", "bank_id", "reason"});
        for (const auto& x : dyn.excluded) csv::write_row(os, {std::to_string(x.year), x.bank_id, x.reason});
    });
    log(1, "network: " + std::to_string(dyn.networks.size()) + " years, roster " + std::to_string(dyn.roster.size()));
}

void stage_anomaly(const RunConfig& rc) {
    BankPanel panel = stage_panel(rc);
    DynamicNetwork dyn = stage_dynamic_network(rc, panel);
    TemporalSequence seq = build_sequence(dyn, panel, rc.index);
    TemporalModelState model = init_model(seq.features.front().cols(), rc.model);
    TrainResult trained = train(std::move(model), seq, rc.training);

    AnomalyReport report = anomaly_scores(trained.model, seq);
    for (int year : panel.years())
        if (panel.records_in_year(year).size() >= 3) report.merge(baseline_anomaly(panel, year));

    write_with(rc.output_dir / "anomaly.csv", [&](std::ostream& os) { write_anomaly_csv(os, report); });
    write_text(rc.output_dir / "model.json", model_to_json(trained.model));
    write_with(rc.output_dir / "training_loss.csv", [&](std::ostream& os) {
        csv::write_row(os, {"epoch", "loss"});
        for (std::size_t i = 0; i < trained.loss_trace.size(); ++i)
            csv::write_row(os, {std::to_string(i), fmt(trained.loss_trace[i])});
    });
    log(1, "anomaly: loss " + fmt(trained.loss_trace.front()) + " -> " + fmt(trained.loss_trace.back()));
}

void stage_simulate(const RunConfig& rc, const StageOptions& options) {
    BankPanel panel = stage_panel(rc);
    const int year = options.year.value_or(rc.scenario_year);
    std::vector<std::string> names = options.scenario ? std::vector<std::string>{*options.scenario} : rc.scenarios;
    auto scenarios = expand_scenarios(names, year, panel);

    std::optional<AnomalyReport> anomaly;
    bool needs_report = std::any_of(scenarios.begin(), scenarios.end(), [](const ShockScenario& s) {
        return s.kind == ShockScenario::Kind::TopAnomalous;
    });
    if (needs_report) {
        fs::path p = rc.output_dir / "anomaly.csv";
        if (!fs::exists(p))
            throw Error(ErrorCode::MissingAnomalyReport, "anomaly.csv not found in " + rc.output_dir.string() +
                                                             "; run `anomaly` before TopAnomalous scenarios");
        anomaly = read_anomaly_csv(read_text(p));
    }

    std::ostringstream summary;
    csv::write_row(summary, {"year", "scenario", "metric", "value"});
    for (const auto& s : scenarios) {
        SimResult r = run_simulation(panel, s, rc.abm, anomaly ? &*anomaly : nullptr);
        const std::string stem = r.scenario + "_" + std::to_string(year);
        write_text(rc.output_dir / ("simresult_" + stem + ".json"), sim_result_json(r));
        write_with(rc.output_dir / ("trace_" + stem + ".csv"), [&](std::ostream& os) { write_trace_csv(os, r); });
        for (auto [metric, value] : {std::pair{"deposit_loss_pct", r.deposit_loss_pct},
                                     std::pair{"failure_rate", r.failure_rate},
                                     std::pair{"capital_remaining_pct", r.capital_remaining_pct}})
            csv::write_row(summary, {std::to_string(year), r.scenario, metric, fmt(value)});
        log(1, "simulate " + stem + ": deposit loss " + fmt(r.deposit_loss_pct) + ", failure rate " +
                   fmt(r.failure_rate));
    }
    write_text(rc.output_dir / "simulation_summary.csv", summary.str());
}

void stage_ensemble(const RunConfig& rc) {
    BankPanel panel = stage_panel(rc);
    EnsembleResult ens = run_ensemble(rc.ensemble, panel);
    auto table = classification_table(ens, rc.ensemble.thresholds);
    write_text(rc.output_dir / "ensemble.json", ensemble_json(ens));
    write_with(rc.output_dir / "classification.csv", [&](std::ostream& os) { write_classification_csv(os, table); });
    write_with(rc.output_dir / "resilience.csv", [&](std::ostream& os) {
        csv::write_row(os, {"country", "year", "mean_capital_remaining", "risk_level", "capital_p05", "capital_p50",
                            "capital_p95", "deposit_loss_p05", "deposit_loss_p50", "deposit_loss_p95"});
        for (std::size_t i = 0; i < ens.cells.size(); ++i) {
            const auto& c = ens.cells[i];
            const auto& rc_row = table[i];
            csv::write_row(os, {c.country.name(), std::to_string(c.year), fmt(rc_row.mean_capital_remaining),
                                std::string(to_string(classify_risk(rc_row.mean_capital_remaining,
                                                                    rc.ensemble.thresholds))),
                                fmt(c.capital_remaining[0]), fmt(c.capital_remaining[2]), fmt(c.capital_remaining[4]),
                                fmt(c.deposit_loss[0]), fmt(c.deposit_loss[2]), fmt(c.deposit_loss[4])});
        }
    });
    log(1, "ensemble: " + std::to_string(ens.cells.size()) + " cells x " + std::to_string(ens.n_runs) + " runs");
}

void stage_plot(const RunConfig& rc) {
    const fs::path dir = rc.output_dir / "plots";

    // per-country mean of each ratio
    {
        fs::path p = require_output(rc, "metrics.csv", "metrics");
        csv::Table t = read_table(p);
        const std::size_t cc = column(t, "country", p), cy = column(t, "year", p);
        std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, int>> sums;
        for (const char* ratio : {"npl_ratio", "cet1_ratio", "roa", "leverage", "srisk_cs"}) {
            const std::size_t cr = column(t, ratio, p);
            for (const auto& row : t.rows)
                if (auto v = csv::parse_number(row[cr])) {
                    auto& s = sums[{row[cc], row[cy], ratio}];
                    s.first += *v;
                    ++s.second;
                }
        }
        write_with(dir / "ratio_trends.csv", [&](std::ostream& os) {
            csv::write_row(os, {"country", "year", "ratio", "mean", "banks"});
            for (const auto& [key, s] : sums)
                csv::write_row(os, {std::get<0>(key), std::get<1>(key), std::get<2>(key), fmt(s.first / s.second),
                                    std::to_string(s.second)});
        });
    }

    // mirrored files: copy the source rows verbatim
    auto mirror = [&](const std::string& source, const std::string& stage, const std::string& target,
                      const std::vector<std::string>& columns, auto keep) {
        fs::path p = require_output(rc, source, stage);
        csv::Table t = read_table(p);
        std::vector<std::size_t> idx;
        for (const auto& c : columns) idx.push_back(column(t, c, p));
        write_with(dir / target, [&](std::ostream& os) {
            csv::write_row(os, columns);
            for (const auto& row : t.rows) {
                if (!keep(t, row)) continue;
                std::vector<std::string> out;
                for (auto i : idx) out.push_back(row[i]);
                csv::write_row(os, out);
            }
        });
    };
    auto all = [](const csv::Table&, const std::vector<std::string>&) { return true; };
    auto geopolitical = [](const csv::Table& t, const std::vector<std::string>& row) {
        return row[*t.column("scenario")].rfind("geopolitical_", 0) == 0;
    };
    auto targeted = [&](const csv::Table& t, const std::vector<std::string>& row) { return !geopolitical(t, row); };

    mirror("aggregate_srisk.csv", "metrics", "aggregate_srisk.csv", {"country", "year", "srisk_cs"}, all);
    mirror("rolling_correlation.csv", "metrics", "profit_correlation.csv", {"year", "mean_profit_correlation"}, all);
    mirror("simulation_summary.csv", "simulate", "scenario_damage.csv", {"year", "scenario", "metric", "value"},
           targeted);
    mirror("simulation_summary.csv", "simulate", "geopolitical_damage.csv", {"year", "scenario", "metric", "value"},
           geopolitical);
    mirror("resilience.csv", "ensemble", "resilience.csv",
           {"country", "year", "mean_capital_remaining", "risk_level", "capital_p05", "capital_p95"}, all);
    log(1, "plot: wrote " + dir.string());
}

void stage_pipeline(const RunConfig& rc) {
    if (rc.synthetic) stage_synth(rc);
    else stage_ingest(rc);
    stage_metrics(rc);
    stage_network(rc);
    stage_anomaly(rc);
    stage_simulate(rc);
    stage_ensemble(rc);
    stage_plot(rc);
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
    CLI::App app{"Systemic-risk toolkit for annual bank panels", "bridges"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<std::string> scenario;
    std::optional<int> year;
    app.add_option("--config", config_path, "run configuration (key=value)");
    app.add_option("--seed", seed, "master seed; overrides seed, tgnn.seed and ensemble.master_seed");
    app.add_option("--out", out_dir, "output directory; overrides output.dir");
    app.add_option("--scenario", scenario, "scenario for `simulate`, e.g. top_assets:5 or geopolitical:Russia");
    app.add_option("--year", year, "scenario year for `simulate`");

    const std::pair<const char*, const char*> commands[] = {
        {"ingest", "validate a vendor panel and write panel.csv"},
        {"synth", "generate a synthetic panel"},
        {"metrics", "risk ratios, SRISK_CS and aggregates"},
        {"network", "dynamic DTW networks, stats and tier segments"},
        {"anomaly", "baseline and TGNN anomaly reports"},
        {"simulate", "bank-run simulations for the configured scenarios"},
        {"ensemble", "Monte Carlo ensemble and risk classification"},
        {"plot", "tidy plot-data files from stage outputs"},
        {"pipeline", "all stages in order"}};
    for (auto [name, help] : commands) app.add_subcommand(name, help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        Config config = config_path.empty() ? Config{} : Config::load(config_path);
        if (seed) {
            for (const char* key : {"seed", "tgnn.seed", "ensemble.master_seed"}) config.set(key, std::to_string(*seed));
        }
        fs::path base = config_path.empty() ? fs::path{} : fs::path(config_path).parent_path();
        RunConfig rc = make_run_config(config, base);
        if (!out_dir.empty()) rc.output_dir = out_dir;

        const std::string command = app.get_subcommands().front()->get_name();
        if (command == "ingest") stage_ingest(rc);
        else if (command == "synth") stage_synth(rc);
        else if (command == "metrics") stage_metrics(rc);
        else if (command == "network") stage_network(rc);
        else if (command == "anomaly") stage_anomaly(rc);
        else if (command == "simulate") stage_simulate(rc, {scenario, year});
        else if (command == "ensemble") stage_ensemble(rc);
        else if (command == "plot") stage_plot(rc);
        else stage_pipeline(rc);
        return 0;
    } catch (const Error& e) {
        std::cerr << "bridges: " << e.what() << "\n";
        return is_validation_error(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "bridges: " << e.what() << "\n";
        return 2;
    }
}

} // namespace bridges::cli
