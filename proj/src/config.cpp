#include "bridges/config.hpp"

#include "bridges/csv.hpp"
#include "bridges/error.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace bridges {

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// Typed reads that remember which keys were consumed.
class Reader {
public:
    explicit Reader(const Config& c) : config_(c) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        return config_.get(key);
    }

    std::optional<double> number(const std::string& key) {
        auto text = raw(key);
        if (!text) return std::nullopt;
        auto v = csv::parse_number(*text);
        if (!v) throw Error(ErrorCode::InvalidConfig, key + ": '" + *text + "' is not a number");
        return v;
    }

    template <class T>
    void read(const std::string& key, T& target) {
        if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = raw(key)) target = *v;
        } else if constexpr (std::is_same_v<T, double>) {
            if (auto v = number(key)) target = *v;
        } else {
            if (auto v = number(key)) target = integral<T>(key, *v);
        }
    }

    template <class T>
    T integral(const std::string& key, double v) {
        if (v != std::floor(v) || v < static_cast<double>(std::numeric_limits<T>::min()) ||
            v > static_cast<double>(std::numeric_limits<T>::max()))
            throw Error(ErrorCode::InvalidConfig, key + " must be an integer in range");
        return static_cast<T>(v);
    }

    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        auto text = raw(key);
        if (!text) return fallback;
        try {
            if (text->empty() || !std::isdigit(static_cast<unsigned char>(text->front()))) throw std::invalid_argument("");
            std::size_t pos = 0;
            auto v = std::stoull(*text, &pos);
            if (pos == text->size()) return v;
        } catch (const std::exception&) {
        }
        throw Error(ErrorCode::InvalidConfig, key + ": '" + *text + "' is not an unsigned 64-bit integer");
    }

    void check_all_used() const {
        for (const auto& [key, value] : config_.values())
            if (!used_.count(key) && key.rfind("columns.", 0) != 0)
                throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
    }

private:
    const Config& config_;
    std::set<std::string> used_;
};

} // namespace

Config Config::parse(std::string_view text) {
    Config c;
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(number) + ": expected key=value");
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(number) + ": empty key");
        c.values_[key] = trim(t.substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str());
}

std::optional<std::string> Config::get(std::string_view key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

RunConfig make_run_config(const Config& config, const std::filesystem::path& base_dir) {
    Reader r(config);
    RunConfig rc;

    rc.seed = r.seed("seed", rc.seed);
    if (auto out = r.raw("output.dir")) rc.output_dir = *out;

    // panel source
    if (auto path = r.raw("input.path")) {
        std::filesystem::path p = *path;
        rc.input_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    bool any_synth = false;
    for (const auto& [key, value] : config.values()) any_synth |= key.rfind("synth.", 0) == 0;
    if (rc.input_path && any_synth)
        throw Error(ErrorCode::InvalidConfig, "set either input.path or synth.* keys, not both");
    if (any_synth) {
        SyntheticPanelSpec s;
        s.country_mix = SyntheticPanelSpec::default_mix();
        r.read("synth.n_banks", s.n_banks);
        r.read("synth.year_start", s.year_start);
        r.read("synth.year_end", s.year_end);
        r.read("synth.size_log_mean", s.size_log_mean);
        r.read("synth.size_log_sd", s.size_log_sd);
        s.seed = r.seed("synth.seed", s.seed);
        if (auto mix = r.raw("synth.country_mix")) {
            s.country_mix.clear();
            for (const auto& item : split_list(*mix)) {
                auto colon = item.rfind(':');
                auto share = colon == std::string::npos ? std::nullopt : csv::parse_number(item.substr(colon + 1));
                if (!share) throw Error(ErrorCode::InvalidConfig, "synth.country_mix entries are Country:share");
                s.country_mix.push_back({Country::parse(trim(item.substr(0, colon))), *share});
            }
        }
        if (auto years = r.raw("synth.shock_years"))
            for (const auto& y : split_list(*years)) {
                auto v = csv::parse_number(y);
                if (!v) throw Error(ErrorCode::InvalidConfig, "synth.shock_years must list years");
                s.shock_years.push_back(r.integral<int>("synth.shock_years", *v));
            }
        if (auto anchor = r.raw("synth.anchor_country"); anchor && !anchor->empty())
            s.anchor_country = Country::parse(*anchor);
        r.read("synth.anchor_top_k", s.anchor_top_k);
        r.read("synth.volatile_banks", s.volatile_banks);
        rc.synthetic = s;
    }
    if (!rc.input_path && !rc.synthetic)
        throw Error(ErrorCode::InvalidConfig, "no panel source: set input.path or synth.* keys");

    for (const auto& [key, value] : config.values())
        if (key.rfind("columns.", 0) == 0) rc.columns.set(key.substr(8), value);

    r.read("metrics.k", rc.srisk_k);
    if (!(rc.srisk_k > 0.0 && rc.srisk_k < 1.0)) throw Error(ErrorCode::InvalidConfig, "metrics.k must lie in (0, 1)");
    r.read("metrics.correlation_window", rc.correlation_window);
    if (rc.correlation_window < 3) throw Error(ErrorCode::InvalidConfig, "metrics.correlation_window must be >= 3");

    r.read("network.window", rc.window);
    if (rc.window < 2) throw Error(ErrorCode::InvalidConfig, "network.window must be >= 2");
    if (auto v = r.number("network.first_year")) rc.network_first_year = r.integral<int>("network.first_year", *v);
    if (auto v = r.number("network.last_year")) rc.network_last_year = r.integral<int>("network.last_year", *v);
    if (auto g = r.raw("network.gamma"); g && g != "median") {
        auto v = csv::parse_number(*g);
        if (!v || !(*v > 0.0)) throw Error(ErrorCode::InvalidConfig, "network.gamma must be 'median' or > 0");
        rc.gamma = v;
    }
    r.read("network.edge_threshold", rc.edge_threshold);
    if (!(rc.edge_threshold >= 0.0 && rc.edge_threshold < 1.0))
        throw Error(ErrorCode::InvalidConfig, "network.edge_threshold must lie in [0, 1)");
    if (auto idx = r.raw("index.components")) rc.index = CompositeIndexSpec::parse(*idx);

    r.read("tgnn.hidden_dim", rc.model.hidden_dim);
    r.read("tgnn.embedding_dim", rc.model.embedding_dim);
    if (auto a = r.raw("tgnn.hidden_activation")) rc.model.hidden_activation = parse_activation(*a);
    if (auto a = r.raw("tgnn.output_activation")) rc.model.output_activation = parse_activation(*a);
    rc.model.seed = r.seed("tgnn.seed", rc.seed);
    r.read("tgnn.epochs", rc.training.epochs);
    r.read("tgnn.learning_rate", rc.training.learning_rate);
    if (auto o = r.raw("tgnn.optimizer")) {
        if (*o == "gd") rc.training.optimizer = Optimizer::GradientDescent;
        else if (*o == "adam") rc.training.optimizer = Optimizer::Adam;
        else throw Error(ErrorCode::InvalidConfig, "tgnn.optimizer must be gd or adam");
    }
    if (rc.training.epochs < 0 || !(rc.training.learning_rate > 0.0))
        throw Error(ErrorCode::InvalidConfig, "tgnn.epochs must be >= 0 and tgnn.learning_rate > 0");

    r.read("abm.alpha", rc.abm.alpha);
    r.read("abm.psi", rc.abm.psi);
    r.read("abm.shock_pct", rc.abm.shock_pct);
    r.read("abm.fire_sale_haircut", rc.abm.fire_sale_haircut);
    r.read("abm.liquidity_fraction", rc.abm.liquidity_fraction);
    r.read("abm.horizon", rc.abm.horizon);
    r.read("abm.stop_epsilon", rc.abm.stop_epsilon);
    rc.abm.validate();

    r.read("scenarios.year", rc.scenario_year);
    if (auto list = r.raw("scenarios.list")) rc.scenarios = split_list(*list);
    for (const auto& s : rc.scenarios)
        if (s != "geopolitical:all") ShockScenario::parse(s, rc.scenario_year);

    EnsembleSpec& e = rc.ensemble;
    r.read("ensemble.n_runs", e.n_runs);
    e.master_seed = r.seed("ensemble.master_seed", rc.seed);
    r.read("ensemble.first_year", e.first_year);
    r.read("ensemble.last_year", e.last_year);
    r.read("ensemble.workers", e.workers);
    r.read("ensemble.half_width.alpha", e.widths.alpha);
    r.read("ensemble.half_width.psi", e.widths.psi);
    r.read("ensemble.half_width.fire_sale_haircut", e.widths.fire_sale_haircut);
    r.read("ensemble.half_width.shock_pct", e.widths.shock_pct);
    r.read("ensemble.threshold.low", e.thresholds.low);
    r.read("ensemble.threshold.medium", e.thresholds.medium);
    r.read("ensemble.threshold.high", e.thresholds.high);
    if (auto list = r.raw("ensemble.countries"))
        for (const auto& c : split_list(*list)) e.countries.push_back(Country::parse(c));
    e.base_params = rc.abm;
    e.validate();

    r.check_all_used();
    return rc;
}

} // namespace bridges
