#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bridges/csv.hpp"
#include "json.hpp"
#include "support.hpp"

#include <cstdlib>

using namespace bridges;
using testing::fs::path;

namespace {

const std::vector<std::string> kFast = {"tgnn.epochs = 30", "ensemble.n_runs = 20"};

struct Outcome {
    int code;
    std::string err;
};

// Runs the CLI with stderr captured.
Outcome run_cli(std::vector<std::string> args) {
    setenv("BRIDGES_LOG", "quiet", 1);
    args.insert(args.begin(), "bridges");
    std::ostringstream capture;
    auto* old = std::cerr.rdbuf(capture.rdbuf());
    int code = bridges::cli::run(args);
    std::cerr.rdbuf(old);
    return {code, capture.str()};
}

path fast_config(const std::string& name, std::vector<std::string> extra = {}) {
    auto dir = testing::scratch_dir(name);
    extra.insert(extra.begin(), kFast.begin(), kFast.end());
    return testing::config_with(dir, extra);
}

csv::Table table(const path& p) { return csv::parse(testing::read_text(p)); }

} // namespace

TEST_CASE("config parsing") {
    auto c = Config::parse("# comment\n a = 1 \n\nb.c=two words\n");
    CHECK(c.get("a") == "1");
    CHECK(c.get("b.c") == "two words");
    CHECK_FALSE(c.has("x"));
    CHECK_THROWS_AS(Config::parse("no equals sign"), Error);
    CHECK_THROWS_AS(Config::parse("= value"), Error);
    CHECK_THROWS_AS(Config::load("/nonexistent/file.conf"), Error);
}

TEST_CASE("run config validation") {
    auto rc = testing::bundled_run_config();
    CHECK(rc.synthetic);
    CHECK(rc.model.seed == rc.seed);
    CHECK(rc.ensemble.master_seed == rc.seed);
    CHECK(rc.ensemble.base_params == rc.abm);

    auto fails = [](const std::string& text) {
        try {
            make_run_config(Config::parse(text));
        } catch (const Error& e) {
            return e.code() == ErrorCode::InvalidConfig;
        }
        return false;
    };
    CHECK(fails(""));
    CHECK(fails("input.path = x.csv\nsynth.n_banks = 10"));
    CHECK(fails("input.path = x.csv\nmystery.key = 1"));
    CHECK(fails("input.path = x.csv\nabm.alpha = 2"));
    CHECK(fails("input.path = x.csv\ntgnn.optimizer = sgd"));
    CHECK(fails("input.path = x.csv\ntgnn.epochs = 1.5"));
    CHECK(fails("input.path = x.csv\nnetwork.gamma = -1"));
    CHECK(fails("input.path = x.csv\nscenarios.list = meteor:5"));
    CHECK(fails("input.path = x.csv\nseed = -4"));
    CHECK_FALSE(fails("input.path = x.csv\ncolumns.total_assets = TA"));

    auto base = make_run_config(Config::parse("input.path = data/x.csv\nseed = 9\ntgnn.seed = 3"), "/cfg");
    CHECK(*base.input_path == path("/cfg/data/x.csv"));
    CHECK(base.model.seed == 3);
    CHECK(base.ensemble.master_seed == 9);
}

TEST_CASE("usage errors exit 1") {
    CHECK(run_cli({}).code == 1);
    CHECK(run_cli({"frobnicate"}).code == 1);
    CHECK(run_cli({"--help"}).code == 0);
    CHECK(run_cli({"metrics", "--config", "/nonexistent.conf"}).code == 2); // Io
    auto cfg = fast_config("usage", {"abm.alpha = 7"});
    CHECK(run_cli({"synth", "--config", cfg.string()}).code == 1);
}

TEST_CASE("stages report missing inputs") {
    auto cfg = fast_config("missing");
    auto out = cfg.parent_path() / "out";
    auto r = run_cli({"metrics", "--config", cfg.string(), "--out", out.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("MissingStageOutput") != std::string::npos);

    REQUIRE(run_cli({"synth", "--config", cfg.string(), "--out", out.string()}).code == 0);
    r = run_cli({"simulate", "--config", cfg.string(), "--out", out.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("MissingAnomalyReport") != std::string::npos);

    // non-anomaly scenarios do not need the report
    r = run_cli({"simulate", "--config", cfg.string(), "--out", out.string(), "--scenario", "top_assets:5"});
    CHECK(r.code == 0);
    CHECK(testing::fs::exists(out / "simresult_top_assets_5_2018.json"));
    r = run_cli({"simulate", "--config", cfg.string(), "--out", out.string(), "--scenario", "geopolitical:Chile"});
    CHECK(r.code == 2);
    CHECK(r.err.find("InsufficientBanks") != std::string::npos);
}

TEST_CASE("runtime failures exit 2") {
    auto cfg = fast_config("diverge", {"tgnn.optimizer = gd", "tgnn.learning_rate = 1e200"});
    auto out = cfg.parent_path() / "out";
    REQUIRE(run_cli({"synth", "--config", cfg.string(), "--out", out.string()}).code == 0);
    auto r = run_cli({"anomaly", "--config", cfg.string(), "--out", out.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("NonFiniteLoss") != std::string::npos);
}

TEST_CASE("ingest applies the column mapping") {
    auto dir = testing::scratch_dir("ingest");
    std::ostringstream os;
    ColumnMapping vendor;
    vendor.set("total_assets", "TA");
    vendor.set("bank_id", "Id");
    save_panel(testing::bundled_panel(), os, vendor);
    testing::write_text(dir / "vendor.csv", os.str());
    testing::write_text(dir / "ingest.conf", "input.path = vendor.csv\ncolumns.total_assets = TA\ncolumns.bank_id = Id\n");
    auto out = dir / "out";
    REQUIRE(run_cli({"ingest", "--config", (dir / "ingest.conf").string(), "--out", out.string()}).code == 0);
    CHECK(load_panel(out / "panel.csv") == testing::bundled_panel());

    testing::write_text(dir / "plain.conf", "input.path = vendor.csv\n");
    auto r = run_cli({"ingest", "--config", (dir / "plain.conf").string(), "--out", out.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("MissingColumn") != std::string::npos);
}

TEST_CASE("pipeline equals the stages run one by one") {
    auto cfg = fast_config("stages");
    auto a = cfg.parent_path() / "pipeline", b = cfg.parent_path() / "stages";
    REQUIRE(run_cli({"pipeline", "--config", cfg.string(), "--out", a.string()}).code == 0);
    for (const char* stage : {"synth", "metrics", "network", "anomaly", "simulate", "ensemble", "plot"})
        REQUIRE(run_cli({stage, "--config", cfg.string(), "--out", b.string()}).code == 0);
    auto ta = testing::tree_contents(a), tb = testing::tree_contents(b);
    CHECK(ta.size() == tb.size());
    for (const auto& [name, text] : ta) {
        INFO(name);
        CHECK(tb.count(name));
        CHECK(tb[name] == text);
    }

    for (const char* f : {"panel.csv", "metrics.csv", "aggregate_srisk.csv", "rolling_correlation.csv",
                          "network_stats.csv", "network_segments.csv", "network_exclusions.csv", "network_2018.csv",
                          "network_2018.json", "anomaly.csv", "model.json", "training_loss.csv",
                          "simulation_summary.csv", "simresult_top_anomalous_tgnn_5_2018.json",
                          "trace_geopolitical_china_2018.csv", "ensemble.json", "classification.csv", "resilience.csv",
                          "plots/ratio_trends.csv", "plots/aggregate_srisk.csv", "plots/profit_correlation.csv",
                          "plots/scenario_damage.csv", "plots/geopolitical_damage.csv", "plots/resilience.csv"}) {
        INFO(f);
        CHECK(ta.count(f));
    }
    CHECK(table(a / "training_loss.csv").rows.size() == 31);
}

TEST_CASE("plot files agree with the stage outputs") {
    auto cfg = fast_config("plots");
    auto out = cfg.parent_path() / "out";
    REQUIRE(run_cli({"pipeline", "--config", cfg.string(), "--out", out.string()}).code == 0);

    // scenario damage: one row per (year, scenario, metric), values match the result files
    auto damage = table(out / "plots" / "scenario_damage.csv");
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    for (const auto& row : damage.rows) {
        CHECK(keys.insert({row[0], row[1], row[2]}).second);
        CHECK(row[1].rfind("geopolitical_", 0) != 0);
        auto doc = nlohmann::json::parse(testing::read_text(out / ("simresult_" + row[1] + "_" + row[0] + ".json")));
        CHECK(doc.at(row[2]).get<double>() == *csv::parse_number(row[3]));
    }
    CHECK(damage.rows.size() == 4 * 3);
    CHECK(table(out / "plots" / "geopolitical_damage.csv").rows.size() == 5 * 3);

    // aggregate SRISK: one row per (country, year), equal to the sum over metrics.csv
    auto aggregate = table(out / "plots" / "aggregate_srisk.csv");
    CHECK(aggregate.rows.size() == 5 * 17);
    auto metrics = table(out / "metrics.csv");
    std::map<std::pair<std::string, std::string>, double> sums;
    for (const auto& row : metrics.rows)
        sums[{row[*metrics.column("country")], row[*metrics.column("year")]}] +=
            *csv::parse_number(row[*metrics.column("srisk_cs")]);
    for (const auto& row : aggregate.rows) CHECK(*csv::parse_number(row[2]) == doctest::Approx(sums.at({row[0], row[1]})));

    // resilience: one row per ensemble cell; band consistent with the classification thresholds
    auto resilience = table(out / "plots" / "resilience.csv");
    CHECK(resilience.rows.size() == 5 * 7);
    for (const auto& row : resilience.rows)
        CHECK(row[3] == to_string(classify_risk(*csv::parse_number(row[2]))));

    auto cls = table(out / "classification.csv");
    CHECK(cls.rows.size() == 5 * 4);
    for (std::size_t y = 2; y < cls.header.size(); ++y)
        for (std::size_t c = 0; c < 5; ++c) {
            double sum = 0;
            for (std::size_t b = 0; b < 4; ++b) sum += *csv::parse_number(cls.rows[c * 4 + b][y]);
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
}

TEST_CASE("seed override changes stochastic outputs only") {
    auto cfg = fast_config("seed");
    auto a = cfg.parent_path() / "a", b = cfg.parent_path() / "b";
    REQUIRE(run_cli({"pipeline", "--config", cfg.string(), "--out", a.string()}).code == 0);
    REQUIRE(run_cli({"pipeline", "--config", cfg.string(), "--out", b.string(), "--seed", "7"}).code == 0);
    CHECK(testing::read_text(a / "panel.csv") == testing::read_text(b / "panel.csv"));
    CHECK(testing::read_text(a / "metrics.csv") == testing::read_text(b / "metrics.csv"));
    CHECK(testing::read_text(a / "model.json") != testing::read_text(b / "model.json"));
    CHECK(testing::read_text(a / "ensemble.json") != testing::read_text(b / "ensemble.json"));
}
