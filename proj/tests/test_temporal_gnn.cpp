#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "bridges/temporal_gnn.hpp"
#include "support.hpp"

using namespace bridges;
using doctest::Approx;
using testing::make_record;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-loop GRU step: the weight matrix's columns are the hidden vectors.
Matrix gru_oracle(const GruCellParams& p, const Matrix& w) {
    const std::size_t d = w.rows(), m = w.cols();
    Matrix out(d, m);
    for (std::size_t col = 0; col < m; ++col) {
        std::vector<double> h(d), z(d), r(d);
        for (std::size_t i = 0; i < d; ++i) h[i] = w(i, col);
        for (std::size_t i = 0; i < d; ++i) {
            double az = p.update_bias(i, 0), ar = p.reset_bias(i, 0);
            for (std::size_t k = 0; k < d; ++k) {
                az += (p.update_input(i, k) + p.update_hidden(i, k)) * h[k];
                ar += (p.reset_input(i, k) + p.reset_hidden(i, k)) * h[k];
            }
            z[i] = sigmoid(az);
            r[i] = sigmoid(ar);
        }
        for (std::size_t i = 0; i < d; ++i) {
            double ac = p.candidate_bias(i, 0);
            for (std::size_t k = 0; k < d; ++k) ac += p.candidate_input(i, k) * h[k] + p.candidate_hidden(i, k) * r[k] * h[k];
            out(i, col) = (1 - z[i]) * h[i] + z[i] * std::tanh(ac);
        }
    }
    return out;
}

GruCellParams random_gru(Rng& rng, std::size_t d, double scale = 0.5) {
    using testing::random_matrix;
    return {random_matrix(rng, d, d, scale), random_matrix(rng, d, d, scale), random_matrix(rng, d, 1, scale),
            random_matrix(rng, d, d, scale), random_matrix(rng, d, d, scale), random_matrix(rng, d, 1, scale),
            random_matrix(rng, d, d, scale), random_matrix(rng, d, d, scale), random_matrix(rng, d, 1, scale)};
}

TemporalSequence random_sequence(Rng& rng, std::size_t n, std::size_t years, std::size_t f) {
    TemporalSequence seq;
    for (std::size_t i = 0; i < n; ++i) seq.roster.push_back("B" + std::to_string(i));
    for (std::size_t t = 0; t < years; ++t) {
        seq.years.push_back(2015 + static_cast<int>(t));
        seq.adjacency.push_back(testing::random_adjacency(rng, n));
        seq.features.push_back(testing::random_matrix(rng, n, f));
    }
    return seq;
}

// Loss assembled from the public forward pieces.
double loss_oracle(const TemporalModelState& model, const TemporalSequence& seq) {
    auto layers = model.layers;
    double total = 0.0;
    const std::size_t n = seq.roster.size();
    for (std::size_t t = 0; t + 1 < seq.years.size(); ++t) {
        if (t > 0)
            for (std::size_t l = 0; l < layers.size(); ++l) layers[l].weight = gru_oracle(model.gru[l], layers[l].weight);
        Matrix z = gcn_forward(normalize_adjacency(seq.adjacency[t]), seq.features[t], layers);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < z.cols(); ++k) dot += z(i, k) * z(j, k);
                double e = sigmoid(dot) - seq.adjacency[t + 1](i, j);
                sum += e * e;
            }
        total += sum / static_cast<double>(n * n);
    }
    return total / static_cast<double>(seq.years.size() - 1);
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an exception");
    return ErrorCode::Io;
}

} // namespace

TEST_CASE("normalize_adjacency hand values") {
    CHECK(normalize_adjacency(Matrix{{1}}) == Matrix{{1}});
    CHECK(normalize_adjacency(Matrix::identity(3)) == Matrix::identity(3));
    auto half = normalize_adjacency(Matrix{{1, 1}, {1, 1}});
    for (double v : half.data()) CHECK(v == Approx(0.5));
    CHECK(code_of([] { normalize_adjacency(Matrix{{1, 0}, {0, 0}}); }) == ErrorCode::ZeroDegreeNode);
    CHECK(code_of([] { normalize_adjacency(Matrix(2, 3)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("normalized adjacency is symmetric with spectral radius at most one") {
    Rng rng(21);
    for (int rep = 0; rep < 50; ++rep) {
        std::size_t n = 2 + rng.index(10);
        auto a = normalize_adjacency(testing::random_adjacency(rng, n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) CHECK(a(i, j) == Approx(a(j, i)).epsilon(1e-14));
        // power iteration on a symmetric nonnegative matrix
        Matrix v(n, 1, 1.0);
        double lambda = 0.0;
        for (int it = 0; it < 200; ++it) {
            Matrix w = matmul(a, v);
            double norm = 0.0;
            for (double x : w.data()) norm += x * x;
            norm = std::sqrt(norm);
            lambda = norm;
            v = w * (1.0 / norm);
        }
        CHECK(lambda <= 1.0 + 1e-9);
        CHECK(lambda == Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("gcn forward") {
    CHECK(gcn_forward(Matrix{{1}}, Matrix{{2}}, {{Matrix{{3}}, Activation::Identity}}) == Matrix{{6}});
    CHECK(gcn_forward(Matrix{{1}}, Matrix{{2}}, {{Matrix{{-3}}, Activation::ReLU}}) == Matrix{{0}});
    CHECK(gcn_forward(Matrix{{1}}, Matrix{{0}}, {{Matrix{{5}}, Activation::Sigmoid}}) == Matrix{{0.5}});

    // isolated nodes transform independently and permute with the input
    Rng rng(2);
    Matrix x = testing::random_matrix(rng, 4, 3);
    std::vector<GcnLayerParams> layers{{testing::random_matrix(rng, 3, 5), Activation::ReLU},
                                       {testing::random_matrix(rng, 5, 2), Activation::Identity}};
    Matrix out = gcn_forward(Matrix::identity(4), x, layers);
    Matrix swapped = x;
    for (std::size_t k = 0; k < 3; ++k) std::swap(swapped(0, k), swapped(3, k));
    Matrix out2 = gcn_forward(Matrix::identity(4), swapped, layers);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(out(0, k) == out2(3, k));
        CHECK(out(1, k) == out2(1, k));
    }
}

TEST_CASE("GRU limiting cases") {
    Rng rng(8);
    const std::size_t d = 3;
    Matrix w = testing::random_matrix(rng, d, 2);
    GruCellParams keep = random_gru(rng, d, 0.0);
    keep.update_bias = Matrix(d, 1, -50.0);
    CHECK(max_abs_diff(evolve_weights(keep, w), w) < 1e-20);

    GruCellParams replace = random_gru(rng, d, 0.0);
    replace.update_bias = Matrix(d, 1, 50.0);
    CHECK(max_abs_diff(evolve_weights(replace, w), Matrix(d, 2)) < 1e-20);

    // z = 1 with candidate bias b gives tanh(b) everywhere
    replace.candidate_bias = Matrix(d, 1, 0.7);
    auto out = evolve_weights(replace, w);
    for (double v : out.data()) CHECK(v == Approx(std::tanh(0.7)));
}

TEST_CASE("GRU matches the scalar oracle") {
    Rng rng(9);
    for (int rep = 0; rep < 30; ++rep) {
        std::size_t d = 1 + rng.index(5), m = 1 + rng.index(4);
        auto p = random_gru(rng, d);
        Matrix w = testing::random_matrix(rng, d, m);
        CHECK(max_abs_diff(evolve_weights(p, w), gru_oracle(p, w)) < 1e-14);
    }
    Rng bad(1);
    CHECK(code_of([&] { evolve_weights(random_gru(bad, 3), Matrix(2, 2)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("init_model shapes and determinism") {
    ModelConfig cfg;
    cfg.hidden_dim = 4;
    cfg.embedding_dim = 3;
    auto m = init_model(5, cfg);
    REQUIRE(m.layers.size() == 2);
    CHECK(m.layers[0].weight.rows() == 5);
    CHECK(m.layers[0].weight.cols() == 4);
    CHECK(m.layers[1].weight.rows() == 4);
    CHECK(m.layers[1].weight.cols() == 3);
    CHECK(m.gru[0].dim() == 5);
    CHECK(m.gru[1].dim() == 4);
    CHECK(m.gru[0].update_bias == Matrix(5, 1));
    CHECK(init_model(5, cfg) == m);
    double limit = std::sqrt(6.0 / 9.0);
    for (double v : m.layers[0].weight.data()) CHECK(std::abs(v) <= limit);
    cfg.seed += 1;
    CHECK_FALSE(init_model(5, cfg) == m);
    CHECK(parameters(m).size() == 2 + 2 * 9);
    cfg.hidden_dim = 0;
    CHECK(code_of([&] { init_model(5, cfg); }) == ErrorCode::InvalidSpec);
}

TEST_CASE("sequence loss matches the assembled oracle") {
    Rng rng(12);
    for (int rep = 0; rep < 5; ++rep) {
        auto seq = random_sequence(rng, 3 + rng.index(5), 2 + rng.index(3), 2);
        ModelConfig cfg;
        cfg.hidden_dim = 3;
        cfg.embedding_dim = 2;
        cfg.seed = rep;
        auto model = init_model(2, cfg);
        // non-zero GRU biases so evolution is visible
        for (auto& g : model.gru) g.candidate_bias = testing::random_matrix(rng, g.dim(), 1);
        CHECK(sequence_loss(model, seq) == Approx(loss_oracle(model, seq)).epsilon(1e-12));
        CHECK(loss_and_gradient(model, seq).loss == Approx(sequence_loss(model, seq)).epsilon(1e-14));
    }
}

TEST_CASE("gradient agrees with central differences") {
    Rng rng(13);
    auto seq = random_sequence(rng, 4, 3, 2);
    ModelConfig cfg;
    cfg.hidden_dim = 3;
    cfg.embedding_dim = 2;
    cfg.hidden_activation = Activation::Sigmoid;
    auto model = init_model(2, cfg);
    for (auto& g : model.gru) {
        g = random_gru(rng, g.dim(), 0.4);
    }
    auto lg = loss_and_gradient(model, seq);
    auto analytic = parameters(lg.gradient);
    auto params = parameters(model);
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
            double saved = params[p]->data()[i];
            params[p]->data()[i] = saved + eps;
            double up = sequence_loss(model, seq);
            params[p]->data()[i] = saved - eps;
            double down = sequence_loss(model, seq);
            params[p]->data()[i] = saved;
            double fd = (up - down) / (2 * eps);
            worst = std::max(worst, std::abs(analytic[p]->data()[i] - fd) / std::max(1.0, std::abs(fd)));
        }
    CHECK(worst < 1e-7);
}

TEST_CASE("training") {
    Rng rng(14);
    auto seq = random_sequence(rng, 6, 4, 2);
    ModelConfig cfg;
    cfg.hidden_dim = 4;
    cfg.embedding_dim = 3;
    auto model = init_model(2, cfg);

    SUBCASE("zero epochs leaves the model unchanged") {
        auto r = train(model, seq, {0, 0.01, Optimizer::GradientDescent});
        CHECK(r.loss_trace.size() == 1);
        CHECK(r.model.layers == model.layers);
        CHECK(r.model.roster == seq.roster);
    }
    SUBCASE("both optimizers reduce the loss deterministically") {
        for (auto opt : {Optimizer::GradientDescent, Optimizer::Adam}) {
            TrainOptions o{60, opt == Optimizer::Adam ? 0.01 : 0.5, opt};
            auto a = train(model, seq, o);
            auto b = train(model, seq, o);
            CHECK(a.loss_trace.size() == 61);
            CHECK(a.loss_trace == b.loss_trace);
            CHECK(a.model == b.model);
            CHECK(a.loss_trace.back() < a.loss_trace.front());
            CHECK(a.loss_trace.front() == Approx(sequence_loss(model, seq)));
        }
    }
    SUBCASE("divergence is reported") {
        CHECK(code_of([&] { train(model, seq, {50, 1e200, Optimizer::GradientDescent}); }) == ErrorCode::NonFiniteLoss);
    }
    SUBCASE("invalid options") {
        CHECK(code_of([&] { train(model, seq, {-1, 0.01, Optimizer::Adam}); }) == ErrorCode::InvalidInput);
        CHECK(code_of([&] { train(model, seq, {1, 0.0, Optimizer::Adam}); }) == ErrorCode::InvalidInput);
        auto one_year = seq;
        one_year.years.resize(1);
        one_year.adjacency.resize(1);
        one_year.features.resize(1);
        CHECK(code_of([&] { train(model, one_year, {1, 0.01, Optimizer::Adam}); }) == ErrorCode::InvalidInput);
    }
}

TEST_CASE("embeddings are permutation equivariant") {
    Rng rng(15);
    auto seq = random_sequence(rng, 7, 3, 2);
    ModelConfig cfg;
    cfg.hidden_dim = 4;
    cfg.embedding_dim = 3;
    auto model = init_model(2, cfg);
    for (auto& g : model.gru) g = random_gru(rng, g.dim(), 0.3);

    std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
    TemporalSequence p = seq;
    for (std::size_t t = 0; t < seq.years.size(); ++t)
        for (std::size_t i = 0; i < 7; ++i) {
            p.roster[i] = seq.roster[perm[i]];
            for (std::size_t j = 0; j < 7; ++j) p.adjacency[t](i, j) = seq.adjacency[t](perm[i], perm[j]);
            for (std::size_t k = 0; k < 2; ++k) p.features[t](i, k) = seq.features[t](perm[i], k);
        }
    auto z = embeddings(model, seq);
    auto zp = embeddings(model, p);
    for (std::size_t t = 0; t < z.size(); ++t)
        for (std::size_t i = 0; i < 7; ++i)
            for (std::size_t k = 0; k < 3; ++k) CHECK(zp[t](i, k) == Approx(z[t](perm[i], k)).epsilon(1e-12));

    auto s = anomaly_scores(model, seq), sp = anomaly_scores(model, p);
    for (const auto& e : s.entries) {
        auto it = std::find_if(sp.entries.begin(), sp.entries.end(),
                               [&](const AnomalyEntry& x) { return x.year == e.year && x.bank_id == e.bank_id; });
        REQUIRE(it != sp.entries.end());
        CHECK(it->score == Approx(e.score).epsilon(1e-9));
    }
}

TEST_CASE("tgnn scores are within-year z-scores") {
    Rng rng(16);
    auto seq = random_sequence(rng, 9, 4, 2);
    auto model = init_model(2, ModelConfig{});
    auto report = anomaly_scores(model, seq);
    CHECK(report.entries.size() == 9 * 3);
    for (int year : {2015, 2016, 2017}) {
        double sum = 0, sq = 0;
        int n = 0;
        for (const auto& e : report.entries)
            if (e.year == year) {
                sum += e.score;
                sq += e.score * e.score;
                ++n;
            }
        CHECK(n == 9);
        CHECK(sum / n == Approx(0.0).epsilon(1e-12).scale(1.0));
        CHECK(sq / n == Approx(1.0).epsilon(1e-10));
    }
    auto trained = train(model, seq, {1, 0.01, Optimizer::Adam}).model;
    auto other = seq;
    other.roster[0] = "ZZ";
    CHECK(code_of([&] { anomaly_scores(trained, other); }) == ErrorCode::RosterMismatch);
}

TEST_CASE("structural sequences") {
    const auto& panel = testing::bundled_panel();
    auto dyn = build_dynamic_network(panel, 2014, 2018, 5, CompositeIndexSpec{});
    auto seq = build_sequence(dyn, panel, CompositeIndexSpec{});
    CHECK(seq.years == std::vector<int>{2014, 2015, 2016, 2017, 2018});
    CHECK(seq.features[0].cols() == 5);
    auto st = structural_sequence(dyn);
    CHECK(st.features[0].cols() == 1);
    for (std::size_t t = 0; t < seq.years.size(); ++t)
        for (std::size_t i = 0; i < seq.roster.size(); ++i) CHECK(seq.features[t](i, 4) == st.features[t](i, 0));
}

TEST_CASE("baseline detector") {
    auto base = [](const std::string& id) {
        auto r = make_record(id, 2018, 1000, 100, 500);
        r.gross_loans = 600;
        r.impaired_loans = 18;
        return r;
    };
    SUBCASE("identical banks all score zero") {
        auto panel = BankPanel::from_records({base("A"), base("B"), base("C"), base("D")});
        auto rep = baseline_anomaly(panel, 2018);
        for (const auto& e : rep.entries) CHECK(e.score == 0.0);
        CHECK(top_k(rep, 2018, 2, AnomalyMethod::Baseline) == std::vector<std::string>{"A", "B"});
    }
    SUBCASE("an outlier ranks first even with zero MAD") {
        auto odd = base("C");
        odd.impaired_loans = 180;
        auto panel = BankPanel::from_records({base("A"), base("B"), odd, base("D"), base("E")});
        auto rep = baseline_anomaly(panel, 2018);
        CHECK(top_k(rep, 2018, 1, AnomalyMethod::Baseline) == std::vector<std::string>{"C"});
        // 1.2533 * mean |dev| = 1.2533 * 0.27 / 5
        CHECK(rep.entries[0].score == Approx(0.27 / (1.2533 * 0.27 / 5.0)));
    }
    SUBCASE("all-null banks are excluded") {
        auto empty = base("C");
        empty.impaired_loans.reset();
        empty.net_income.reset();
        empty.core_tier1_ratio.reset();
        empty.total_equity = 0;
        empty.total_liabilities = 1000;
        auto panel = BankPanel::from_records({base("A"), base("B"), empty, base("D")});
        auto rep = baseline_anomaly(panel, 2018);
        CHECK(rep.entries.size() == 3);
        REQUIRE(rep.excluded.size() == 1);
        CHECK(rep.excluded[0].bank_id == "C");
    }
    SUBCASE("rankings are invariant to affine rescaling of a ratio") {
        Rng rng(4);
        std::vector<BankYearRecord> a, b;
        for (int i = 0; i < 12; ++i) {
            auto r = base("K" + std::to_string(i));
            r.core_tier1_ratio = rng.uniform(6, 18);
            r.impaired_loans.reset();
            r.net_income.reset();
            r.total_equity = 0;
            r.total_liabilities = 1000;
            a.push_back(r);
            r.core_tier1_ratio = 3.0 * *r.core_tier1_ratio + 5.0;
            b.push_back(r);
        }
        auto ra = baseline_anomaly(BankPanel::from_records(a), 2018);
        auto rb = baseline_anomaly(BankPanel::from_records(b), 2018);
        CHECK(top_k(ra, 2018, 12, AnomalyMethod::Baseline) == top_k(rb, 2018, 12, AnomalyMethod::Baseline));
    }
    SUBCASE("small years are degenerate") {
        auto panel = BankPanel::from_records({base("A"), base("B")});
        CHECK(code_of([&] { baseline_anomaly(panel, 2018); }) == ErrorCode::DegenerateYear);
    }
}

TEST_CASE("top_k breaks ties by bank id") {
    AnomalyReport rep;
    rep.entries = {{2018, "C", AnomalyMethod::TGNN, 2.0, 1}, {2018, "A", AnomalyMethod::TGNN, 1.0, 2},
                   {2018, "B", AnomalyMethod::TGNN, 1.0, 2}, {2019, "A", AnomalyMethod::TGNN, 9.0, 1}};
    CHECK(top_k(rep, 2018, 2) == std::vector<std::string>{"C", "A"});
    CHECK(top_k(rep, 2018, 3) == std::vector<std::string>{"C", "A", "B"});
    CHECK(code_of([&] { top_k(rep, 2018, 4); }) == ErrorCode::InsufficientBanks);
    CHECK(code_of([&] { top_k(rep, 2018, 0); }) == ErrorCode::InvalidInput);
    CHECK(code_of([&] { top_k(rep, 2018, 1, AnomalyMethod::Baseline); }) == ErrorCode::InsufficientBanks);
}

TEST_CASE("anomaly csv round trip") {
    Rng rng(17);
    auto seq = random_sequence(rng, 5, 3, 2);
    auto rep = anomaly_scores(init_model(2, ModelConfig{}), seq);
    rep.excluded.push_back({2015, "X", AnomalyMethod::Baseline});
    std::ostringstream os;
    write_anomaly_csv(os, rep);
    auto back = read_anomaly_csv(os.str());
    REQUIRE(back.entries.size() == rep.entries.size());
    for (std::size_t i = 0; i < rep.entries.size(); ++i) {
        CHECK(back.entries[i].score == rep.entries[i].score);
        CHECK(back.entries[i].rank == rep.entries[i].rank);
        CHECK(back.entries[i].bank_id == rep.entries[i].bank_id);
    }
    REQUIRE(back.excluded.size() == 1);
    CHECK(back.excluded[0].bank_id == "X");
    CHECK(code_of([] { read_anomaly_csv("year,bank_id\n2018,A\n"); }) == ErrorCode::MissingColumn);
    CHECK(code_of([] { read_anomaly_csv("year,bank_id,method,score,rank\n2018,A,Nope,1,1\n"); }) ==
          ErrorCode::ParseError);
}

TEST_CASE("model json round trip is exact") {
    Rng rng(18);
    auto seq = random_sequence(rng, 5, 3, 2);
    auto model = train(init_model(2, ModelConfig{}), seq, {5, 0.01, Optimizer::Adam}).model;
    auto back = model_from_json(model_to_json(model));
    CHECK(back == model);
    CHECK(model_to_json(back) == model_to_json(model));
    CHECK(code_of([] { model_from_json("{\"format\":\"other\"}"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { model_from_json("not json"); }) == ErrorCode::ParseError);
}

TEST_CASE("activation and method names") {
    for (auto a : {Activation::ReLU, Activation::Identity, Activation::Sigmoid}) CHECK(parse_activation(to_string(a)) == a);
    CHECK_THROWS_AS(parse_activation("tanhh"), Error);
    CHECK(parse_anomaly_method("baseline") == AnomalyMethod::Baseline);
    CHECK(parse_anomaly_method("TGNN") == AnomalyMethod::TGNN);
    CHECK_FALSE(parse_anomaly_method("x"));
}
