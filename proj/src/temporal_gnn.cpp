#include "bridges/temporal_gnn.hpp"

#include "bridges/csv.hpp"
#include "bridges/error.hpp"
#include "bridges/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

namespace bridges {

std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    for (auto a : {Activation::ReLU, Activation::Identity, Activation::Sigmoid})
        if (to_string(a) == name) return a;
    throw Error(ErrorCode::InvalidConfig, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(AnomalyMethod m) { return m == AnomalyMethod::TGNN ? "TGNN" : "Baseline"; }

std::optional<AnomalyMethod> parse_anomaly_method(std::string_view name) {
    if (name == "TGNN" || name == "tgnn") return AnomalyMethod::TGNN;
    if (name == "Baseline" || name == "baseline") return AnomalyMethod::Baseline;
    return std::nullopt;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix apply(Activation a, const Matrix& pre) {
    Matrix out = pre;
    for (auto& v : out.data()) {
        switch (a) {
        case Activation::ReLU: v = v > 0.0 ? v : 0.0; break;
        case Activation::Identity: break;
        case Activation::Sigmoid: v = sigmoid(v); break;
        }
    }
    return out;
}

// dL/dpre given dL/dout, the pre-activation and the activation output.
Matrix activation_backward(Activation a, const Matrix& d_out, const Matrix& pre, const Matrix& out) {
    Matrix d = d_out;
    auto dd = d.data();
    auto p = pre.data();
    auto o = out.data();
    for (std::size_t i = 0; i < dd.size(); ++i) {
        switch (a) {
        case Activation::ReLU: dd[i] = p[i] > 0.0 ? dd[i] : 0.0; break;
        case Activation::Identity: break;
        case Activation::Sigmoid: dd[i] *= o[i] * (1.0 - o[i]); break;
        }
    }
    return d;
}

Matrix add_bias(Matrix m, const Matrix& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += bias(r, 0);
    return m;
}

Matrix row_sums(const Matrix& m) {
    Matrix s(m.rows(), 1);
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) s(r, 0) += m(r, c);
    return s;
}

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.uniform(-limit, limit);
    return m;
}

TemporalModelState zero_like(const TemporalModelState& model) {
    TemporalModelState g = model;
    for (auto* p : parameters(g)) *p = Matrix(p->rows(), p->cols());
    return g;
}

struct GruCache {
    Matrix h, z, r, c, rh;
};

GruCache gru_forward(const GruCellParams& p, const Matrix& h) {
    if (h.rows() != p.dim()) throw Error(ErrorCode::DimensionMismatch, "GRU hidden size != weight rows");
    GruCache cache;
    cache.h = h;
    cache.z = apply(Activation::Sigmoid,
                    add_bias(matmul(p.update_input, h) + matmul(p.update_hidden, h), p.update_bias));
    cache.r = apply(Activation::Sigmoid,
                    add_bias(matmul(p.reset_input, h) + matmul(p.reset_hidden, h), p.reset_bias));
    cache.rh = hadamard(cache.r, h);
    cache.c = add_bias(matmul(p.candidate_input, h) + matmul(p.candidate_hidden, cache.rh), p.candidate_bias);
    for (auto& v : cache.c.data()) v = std::tanh(v);
    return cache;
}

Matrix gru_output(const GruCache& k) {
    Matrix out(k.h.rows(), k.h.cols());
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j)
            out(i, j) = (1.0 - k.z(i, j)) * k.h(i, j) + k.z(i, j) * k.c(i, j);
    return out;
}

// Accumulates parameter gradients into `g` and returns dL/dh.
Matrix gru_backward(const GruCellParams& p, const GruCache& k, const Matrix& d_out, GruCellParams& g) {
    const std::size_t d = k.h.rows(), cols = k.h.cols();
    Matrix dz(d, cols), dc(d, cols), dh(d, cols);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < cols; ++j) {
            dz(i, j) = d_out(i, j) * (k.c(i, j) - k.h(i, j));
            dc(i, j) = d_out(i, j) * k.z(i, j);
            dh(i, j) = d_out(i, j) * (1.0 - k.z(i, j));
        }

    Matrix da_c = dc;
    for (std::size_t i = 0; i < da_c.size(); ++i) da_c.data()[i] *= 1.0 - k.c.data()[i] * k.c.data()[i];
    g.candidate_input += matmul_nt(da_c, k.h);
    g.candidate_hidden += matmul_nt(da_c, k.rh);
    g.candidate_bias += row_sums(da_c);
    Matrix d_rh = matmul_tn(p.candidate_hidden, da_c);
    dh += hadamard(d_rh, k.r);
    dh += matmul_tn(p.candidate_input, da_c);

    Matrix da_r = hadamard(d_rh, k.h);
    for (std::size_t i = 0; i < da_r.size(); ++i) da_r.data()[i] *= k.r.data()[i] * (1.0 - k.r.data()[i]);
    g.reset_input += matmul_nt(da_r, k.h);
    g.reset_hidden += matmul_nt(da_r, k.h);
    g.reset_bias += row_sums(da_r);
    dh += matmul_tn(p.reset_input, da_r);
    dh += matmul_tn(p.reset_hidden, da_r);

    Matrix da_z = dz;
    for (std::size_t i = 0; i < da_z.size(); ++i) da_z.data()[i] *= k.z.data()[i] * (1.0 - k.z.data()[i]);
    g.update_input += matmul_nt(da_z, k.h);
    g.update_hidden += matmul_nt(da_z, k.h);
    g.update_bias += row_sums(da_z);
    dh += matmul_tn(p.update_input, da_z);
    dh += matmul_tn(p.update_hidden, da_z);
    return dh;
}

void check_sequence(const TemporalSequence& seq) {
    const std::size_t n = seq.roster.size();
    if (seq.adjacency.size() != seq.years.size() || seq.features.size() != seq.years.size())
        throw Error(ErrorCode::DimensionMismatch, "sequence years, adjacency and features differ in length");
    for (std::size_t t = 0; t < seq.years.size(); ++t) {
        if (seq.adjacency[t].rows() != n || seq.adjacency[t].cols() != n)
            throw Error(ErrorCode::DimensionMismatch, "adjacency shape != roster size");
        if (seq.features[t].rows() != n) throw Error(ErrorCode::DimensionMismatch, "feature rows != roster size");
    }
}

void check_roster(const TemporalModelState& model, const TemporalSequence& seq) {
    if (!model.roster.empty() && model.roster != seq.roster)
        throw Error(ErrorCode::RosterMismatch, "model was trained on a different roster");
}

// Evolved weights for every year: weights[t][layer].
struct WeightPath {
    std::vector<std::vector<Matrix>> weights;
    std::vector<std::vector<GruCache>> caches; // caches[t][layer] produced weights[t+1]
};

WeightPath evolve_path(const TemporalModelState& model, std::size_t years) {
    WeightPath path;
    path.weights.resize(years);
    path.caches.resize(years ? years - 1 : 0);
    for (const auto& layer : model.layers) path.weights[0].push_back(layer.weight);
    for (std::size_t t = 1; t < years; ++t)
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            path.caches[t - 1].push_back(gru_forward(model.gru[l], path.weights[t - 1][l]));
            path.weights[t].push_back(gru_output(path.caches[t - 1].back()));
        }
    return path;
}

struct LayerCache {
    Matrix propagated; // Â H
    Matrix pre;        // Â H W
    Matrix out;
};

std::vector<LayerCache> forward_cached(const Matrix& norm_adj, const Matrix& features,
                                       const std::vector<GcnLayerParams>& layers, const std::vector<Matrix>& weights) {
    std::vector<LayerCache> caches;
    const Matrix* h = &features;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        LayerCache c;
        c.propagated = matmul(norm_adj, *h);
        c.pre = matmul(c.propagated, weights[l]);
        c.out = apply(layers[l].activation, c.pre);
        caches.push_back(std::move(c));
        h = &caches.back().out;
    }
    return caches;
}

Matrix reconstruct(const Matrix& z) {
    Matrix s = matmul_nt(z, z);
    for (auto& v : s.data()) v = sigmoid(v);
    return s;
}

} // namespace

// ---------------------------------------------------------------------------

TemporalModelState init_model(std::size_t feature_dim, const ModelConfig& config) {
    if (feature_dim == 0 || config.hidden_dim == 0 || config.embedding_dim == 0)
        throw Error(ErrorCode::InvalidSpec, "model dimensions must be positive");
    Rng rng(config.seed);
    TemporalModelState model;
    model.rng_seed = config.seed;
    const std::size_t dims[] = {feature_dim, config.hidden_dim, config.embedding_dim};
    const Activation acts[] = {config.hidden_activation, config.output_activation};
    for (std::size_t l = 0; l < 2; ++l) model.layers.push_back({glorot(dims[l], dims[l + 1], rng), acts[l]});
    for (std::size_t l = 0; l < 2; ++l) {
        const std::size_t d = dims[l];
        GruCellParams g;
        g.update_input = glorot(d, d, rng);
        g.update_hidden = glorot(d, d, rng);
        g.reset_input = glorot(d, d, rng);
        g.reset_hidden = glorot(d, d, rng);
        g.candidate_input = glorot(d, d, rng);
        g.candidate_hidden = glorot(d, d, rng);
        g.update_bias = Matrix(d, 1);
        g.reset_bias = Matrix(d, 1);
        g.candidate_bias = Matrix(d, 1);
        model.gru.push_back(std::move(g));
    }
    return model;
}

std::vector<Matrix*> parameters(TemporalModelState& model) {
    std::vector<Matrix*> out;
    for (auto& l : model.layers) out.push_back(&l.weight);
    for (auto& g : model.gru)
        for (Matrix* m : {&g.update_input, &g.update_hidden, &g.update_bias, &g.reset_input, &g.reset_hidden,
                          &g.reset_bias, &g.candidate_input, &g.candidate_hidden, &g.candidate_bias})
            out.push_back(m);
    return out;
}

std::vector<const Matrix*> parameters(const TemporalModelState& model) {
    auto mutable_params = parameters(const_cast<TemporalModelState&>(model));
    return {mutable_params.begin(), mutable_params.end()};
}

TemporalSequence build_sequence(const DynamicNetwork& network, const BankPanel& panel, const CompositeIndexSpec& spec) {
    auto standardized = standardize_components(panel, spec);
    std::map<std::pair<std::string_view, int>, std::size_t> record_index;
    const auto& recs = panel.records();
    for (std::size_t i = 0; i < recs.size(); ++i) record_index[{recs[i].bank_id, recs[i].year}] = i;

    TemporalSequence seq;
    seq.roster = network.roster;
    const std::size_t n = seq.roster.size(), m = spec.components.size();
    for (const auto& net : network.networks) {
        seq.years.push_back(net.year);
        seq.adjacency.push_back(net.adjacency);
        Matrix x(n, m + 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (auto it = record_index.find({seq.roster[i], net.year}); it != record_index.end())
                for (std::size_t c = 0; c < m; ++c) x(i, c) = standardized.z[it->second][c].value_or(0.0);
            double degree = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) degree += net.adjacency(i, j);
            x(i, m) = n > 1 ? degree / static_cast<double>(n - 1) : 0.0;
        }
        seq.features.push_back(std::move(x));
    }
    return seq;
}

TemporalSequence structural_sequence(const DynamicNetwork& network) {
    TemporalSequence seq;
    seq.roster = network.roster;
    const std::size_t n = seq.roster.size();
    for (const auto& net : network.networks) {
        seq.years.push_back(net.year);
        seq.adjacency.push_back(net.adjacency);
        Matrix x(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            double degree = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) degree += net.adjacency(i, j);
            x(i, 0) = n > 1 ? degree / static_cast<double>(n - 1) : 0.0;
        }
        seq.features.push_back(std::move(x));
    }
    return seq;
}

Matrix normalize_adjacency(const Matrix& a) {
    if (a.rows() != a.cols()) throw Error(ErrorCode::DimensionMismatch, "adjacency must be square");
    const std::size_t n = a.rows();
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (a(i, j) < 0.0) throw Error(ErrorCode::InvalidInput, "adjacency has negative weights");
            degree += a(i, j);
        }
        if (!(degree > 0.0)) throw Error(ErrorCode::ZeroDegreeNode, "node " + std::to_string(i) + " has zero degree");
        inv_sqrt[i] = 1.0 / std::sqrt(degree);
    }
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * a(i, j) * inv_sqrt[j];
    return out;
}

Matrix gcn_forward(const Matrix& norm_adj, const Matrix& features, const std::vector<GcnLayerParams>& layers) {
    std::vector<Matrix> weights;
    for (const auto& l : layers) weights.push_back(l.weight);
    if (layers.empty()) return features;
    return forward_cached(norm_adj, features, layers, weights).back().out;
}

Matrix evolve_weights(const GruCellParams& gru, const Matrix& prev_weight) {
    return gru_output(gru_forward(gru, prev_weight));
}

std::vector<Matrix> embeddings(const TemporalModelState& model, const TemporalSequence& seq) {
    check_sequence(seq);
    check_roster(model, seq);
    WeightPath path = evolve_path(model, seq.years.size());
    std::vector<Matrix> out;
    for (std::size_t t = 0; t < seq.years.size(); ++t) {
        Matrix norm = normalize_adjacency(seq.adjacency[t]);
        out.push_back(forward_cached(norm, seq.features[t], model.layers, path.weights[t]).back().out);
    }
    return out;
}

LossGradient loss_and_gradient(const TemporalModelState& model, const TemporalSequence& seq) {
    check_sequence(seq);
    const std::size_t years = seq.years.size();
    if (years < 2) throw Error(ErrorCode::InvalidInput, "need at least two years to fit transitions");
    if (model.layers.size() != model.gru.size()) throw Error(ErrorCode::DimensionMismatch, "one GRU per layer required");
    const std::size_t n = seq.roster.size();
    const std::size_t layers = model.layers.size();
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(years - 1));

    WeightPath path = evolve_path(model, years);
    LossGradient result;
    result.gradient = zero_like(model);

    // dL/dW_t per layer, filled by the per-year GCN backward passes
    std::vector<std::vector<Matrix>> d_weight(years);
    for (std::size_t t = 0; t < years; ++t)
        for (std::size_t l = 0; l < layers; ++l)
            d_weight[t].emplace_back(path.weights[t][l].rows(), path.weights[t][l].cols());

    double loss = 0.0;
    for (std::size_t t = 0; t + 1 < years; ++t) {
        Matrix norm = normalize_adjacency(seq.adjacency[t]);
        auto caches = forward_cached(norm, seq.features[t], model.layers, path.weights[t]);
        const Matrix& z = caches.back().out;
        Matrix y = reconstruct(z);
        const Matrix& target = seq.adjacency[t + 1];

        Matrix d_s(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double diff = y(i, j) - target(i, j);
                loss += diff * diff * scale;
                d_s(i, j) = 2.0 * scale * diff * y(i, j) * (1.0 - y(i, j));
            }
        Matrix d_out = matmul(d_s + d_s.transpose(), z);
        for (std::size_t l = layers; l-- > 0;) {
            Matrix d_pre = activation_backward(model.layers[l].activation, d_out, caches[l].pre, caches[l].out);
            d_weight[t][l] += matmul_tn(caches[l].propagated, d_pre);
            if (l > 0) d_out = matmul_tn(norm, matmul_nt(d_pre, path.weights[t][l]));
        }
    }

    // backpropagation through the weight evolution
    for (std::size_t t = years - 1; t >= 1; --t)
        for (std::size_t l = 0; l < layers; ++l)
            d_weight[t - 1][l] += gru_backward(model.gru[l], path.caches[t - 1][l], d_weight[t][l], result.gradient.gru[l]);
    for (std::size_t l = 0; l < layers; ++l) result.gradient.layers[l].weight = d_weight[0][l];

    result.loss = loss;
    return result;
}

double sequence_loss(const TemporalModelState& model, const TemporalSequence& seq) {
    check_sequence(seq);
    const std::size_t years = seq.years.size();
    if (years < 2) throw Error(ErrorCode::InvalidInput, "need at least two years to fit transitions");
    const std::size_t n = seq.roster.size();
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(n) * static_cast<double>(years - 1));
    WeightPath path = evolve_path(model, years);
    double loss = 0.0;
    for (std::size_t t = 0; t + 1 < years; ++t) {
        Matrix norm = normalize_adjacency(seq.adjacency[t]);
        Matrix y = reconstruct(forward_cached(norm, seq.features[t], model.layers, path.weights[t]).back().out);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double diff = y(i, j) - seq.adjacency[t + 1](i, j);
                loss += diff * diff * scale;
            }
    }
    return loss;
}

TrainResult train(TemporalModelState model, const TemporalSequence& seq, const TrainOptions& options) {
    if (options.epochs < 0) throw Error(ErrorCode::InvalidInput, "epochs must be >= 0");
    if (!(options.learning_rate > 0.0)) throw Error(ErrorCode::InvalidInput, "learning rate must be > 0");
    check_roster(model, seq);
    TrainResult result;

    auto not_finite = [&](double loss, int epoch) {
        return Error(ErrorCode::NonFiniteLoss, "loss became " + std::to_string(loss) + " at epoch " +
                                                   std::to_string(epoch) + "; lower the learning rate (currently " +
                                                   std::to_string(options.learning_rate) + ")");
    };

    // Adam moments
    std::vector<Matrix> first, second;
    if (options.optimizer == Optimizer::Adam)
        for (const Matrix* p : parameters(model)) {
            first.emplace_back(p->rows(), p->cols());
            second.emplace_back(p->rows(), p->cols());
        }
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        LossGradient lg = loss_and_gradient(model, seq);
        if (!std::isfinite(lg.loss)) throw not_finite(lg.loss, epoch);
        result.loss_trace.push_back(lg.loss);
        auto params = parameters(model);
        auto grads = parameters(std::as_const(lg.gradient));
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto w = params[p]->data();
            auto g = grads[p]->data();
            if (options.optimizer == Optimizer::GradientDescent) {
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= options.learning_rate * g[i];
            } else {
                auto m = first[p].data();
                auto v = second[p].data();
                double c1 = 1.0 - std::pow(beta1, epoch + 1), c2 = 1.0 - std::pow(beta2, epoch + 1);
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                    w[i] -= options.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + adam_eps);
                }
            }
        }
    }
    double final_loss = sequence_loss(model, seq);
    if (!std::isfinite(final_loss)) throw not_finite(final_loss, options.epochs);
    result.loss_trace.push_back(final_loss);
    model.roster = seq.roster;
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// anomaly reports

namespace {

void rank_group(std::vector<AnomalyEntry>& group) {
    std::sort(group.begin(), group.end(), [](const AnomalyEntry& a, const AnomalyEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.bank_id < b.bank_id;
    });
    for (std::size_t i = 0; i < group.size(); ++i) group[i].rank = static_cast<int>(i + 1);
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size();
    return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

} // namespace

void AnomalyReport::merge(const AnomalyReport& other) {
    entries.insert(entries.end(), other.entries.begin(), other.entries.end());
    excluded.insert(excluded.end(), other.excluded.begin(), other.excluded.end());
}

AnomalyReport anomaly_scores(const TemporalModelState& model, const TemporalSequence& seq) {
    check_sequence(seq);
    check_roster(model, seq);
    const std::size_t n = seq.roster.size();
    auto z = embeddings(model, seq);
    AnomalyReport report;
    for (std::size_t t = 0; t + 1 < seq.years.size(); ++t) {
        Matrix y = reconstruct(z[t]);
        std::vector<double> raw(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double diff = y(i, j) - seq.adjacency[t + 1](i, j);
                raw[i] += diff * diff;
            }
            raw[i] /= static_cast<double>(n);
        }
        double mean = 0.0;
        for (double r : raw) mean += r;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double r : raw) var += (r - mean) * (r - mean);
        double sd = std::sqrt(var / static_cast<double>(n));

        std::vector<AnomalyEntry> group;
        for (std::size_t i = 0; i < n; ++i)
            group.push_back({seq.years[t], seq.roster[i], AnomalyMethod::TGNN, sd > 0.0 ? (raw[i] - mean) / sd : 0.0, 0});
        rank_group(group);
        report.entries.insert(report.entries.end(), group.begin(), group.end());
    }
    return report;
}

AnomalyReport baseline_anomaly(const BankPanel& panel, int year) {
    auto recs = panel.records_in_year(year);
    if (recs.size() < 3) throw Error(ErrorCode::DegenerateYear, "baseline needs >= 3 banks in " + std::to_string(year));
    constexpr RatioKind kinds[] = {RatioKind::NplRatio, RatioKind::Cet1Ratio, RatioKind::Roa, RatioKind::Leverage};

    std::vector<std::optional<double>> score(recs.size());
    for (RatioKind kind : kinds) {
        std::vector<std::pair<std::size_t, double>> values;
        for (std::size_t i = 0; i < recs.size(); ++i)
            if (auto v = ratio_value(*recs[i], kind)) values.emplace_back(i, *v);
        if (values.empty()) continue;
        std::vector<double> x;
        for (auto& [i, v] : values) x.push_back(v);
        double med = median_of(x);
        std::vector<double> dev;
        for (double v : x) dev.push_back(std::abs(v - med));
        double spread = 1.4826 * median_of(dev);
        if (!(spread > 0.0)) {
            double mean_dev = 0.0;
            for (double d : dev) mean_dev += d;
            spread = 1.2533 * mean_dev / static_cast<double>(dev.size());
        }
        for (auto& [i, v] : values) {
            double robust_z = spread > 0.0 ? std::abs(v - med) / spread : 0.0;
            score[i] = std::max(score[i].value_or(0.0), robust_z);
        }
    }

    AnomalyReport report;
    std::vector<AnomalyEntry> group;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (score[i]) group.push_back({year, recs[i]->bank_id, AnomalyMethod::Baseline, *score[i], 0});
        else report.excluded.push_back({year, recs[i]->bank_id, AnomalyMethod::Baseline});
    }
    rank_group(group);
    report.entries = std::move(group);
    return report;
}

std::vector<std::string> top_k(const AnomalyReport& report, int year, std::size_t k, AnomalyMethod method) {
    if (k < 1) throw Error(ErrorCode::InvalidInput, "k must be >= 1");
    std::vector<const AnomalyEntry*> group;
    for (const auto& e : report.entries)
        if (e.year == year && e.method == method) group.push_back(&e);
    if (group.size() < k)
        throw Error(ErrorCode::InsufficientBanks, std::to_string(group.size()) + " " + std::string(to_string(method)) +
                                                      " scores in " + std::to_string(year) + ", need " +
                                                      std::to_string(k));
    std::sort(group.begin(), group.end(), [](const AnomalyEntry* a, const AnomalyEntry* b) {
        if (a->rank != b->rank) return a->rank < b->rank;
        return a->bank_id < b->bank_id;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(group[i]->bank_id);
    return out;
}

void write_anomaly_csv(std::ostream& os, const AnomalyReport& report) {
    csv::write_row(os, {"year", "bank_id", "method", "score", "rank"});
    for (const auto& e : report.entries)
        csv::write_row(os, {std::to_string(e.year), e.bank_id, std::string(to_string(e.method)),
                            csv::format_number(e.score), std::to_string(e.rank)});
    for (const auto& x : report.excluded)
        csv::write_row(os, {std::to_string(x.year), x.bank_id, std::string(to_string(x.method)), "", ""});
}

AnomalyReport read_anomaly_csv(std::string_view text) {
    csv::Table table = csv::parse(text);
    auto col = [&](std::string_view name) {
        auto c = table.column(name);
        if (!c) throw Error(ErrorCode::MissingColumn, std::string(name) + " in anomaly report");
        return *c;
    };
    const std::size_t cy = col("year"), cb = col("bank_id"), cm = col("method"), cs = col("score"), cr = col("rank");
    AnomalyReport report;
    for (std::size_t row = 0; row < table.rows.size(); ++row) {
        const auto& cells = table.rows[row];
        if (cells.size() < table.header.size())
            throw Error(ErrorCode::ParseError, "anomaly report row " + std::to_string(row + 2) + " is short");
        auto year = csv::parse_number(cells[cy]);
        auto method = parse_anomaly_method(cells[cm]);
        if (!year || !method) throw Error(ErrorCode::ParseError, "anomaly report row " + std::to_string(row + 2));
        if (cells[cs].empty()) {
            report.excluded.push_back({static_cast<int>(*year), cells[cb], *method});
            continue;
        }
        auto score = csv::parse_number(cells[cs]);
        auto rank = csv::parse_number(cells[cr]);
        if (!score || !rank) throw Error(ErrorCode::ParseError, "anomaly report row " + std::to_string(row + 2));
        report.entries.push_back({static_cast<int>(*year), cells[cb], *method, *score, static_cast<int>(*rank)});
    }
    return report;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

using ojson = nlohmann::ordered_json;

ojson matrix_json(const Matrix& m) {
    ojson j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::vector<double>(m.data().begin(), m.data().end());
    return j;
}

Matrix matrix_from(const ojson& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(), j.at("data").get<std::vector<double>>());
}

constexpr const char* kGruFields[] = {"update_input",    "update_hidden",    "update_bias",
                                      "reset_input",     "reset_hidden",     "reset_bias",
                                      "candidate_input", "candidate_hidden", "candidate_bias"};

std::vector<Matrix*> gru_members(GruCellParams& g) {
    return {&g.update_input,    &g.update_hidden,    &g.update_bias,
            &g.reset_input,     &g.reset_hidden,     &g.reset_bias,
            &g.candidate_input, &g.candidate_hidden, &g.candidate_bias};
}

} // namespace

std::string model_to_json(const TemporalModelState& model) {
    ojson doc;
    doc["format"] = "bridges.temporal_model";
    doc["version"] = 1;
    doc["feature_rule"] = model.feature_rule;
    doc["rng_seed"] = model.rng_seed;
    doc["roster"] = model.roster;
    doc["layers"] = ojson::array();
    for (const auto& l : model.layers)
        doc["layers"].push_back({{"activation", std::string(to_string(l.activation))}, {"weight", matrix_json(l.weight)}});
    doc["gru"] = ojson::array();
    for (auto g : model.gru) {
        ojson cell;
        auto members = gru_members(g);
        for (std::size_t i = 0; i < members.size(); ++i) cell[kGruFields[i]] = matrix_json(*members[i]);
        doc["gru"].push_back(std::move(cell));
    }
    return doc.dump(1) + "\n";
}

TemporalModelState model_from_json(std::string_view text) {
    try {
        ojson doc = ojson::parse(text);
        if (doc.at("format") != "bridges.temporal_model" || doc.at("version") != 1)
            throw Error(ErrorCode::ParseError, "unsupported model document");
        TemporalModelState model;
        model.feature_rule = doc.at("feature_rule").get<std::string>();
        model.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
        model.roster = doc.at("roster").get<std::vector<std::string>>();
        for (const auto& l : doc.at("layers"))
            model.layers.push_back({matrix_from(l.at("weight")), parse_activation(l.at("activation").get<std::string>())});
        for (const auto& cell : doc.at("gru")) {
            GruCellParams g;
            auto members = gru_members(g);
            for (std::size_t i = 0; i < members.size(); ++i) *members[i] = matrix_from(cell.at(kGruFields[i]));
            model.gru.push_back(std::move(g));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("model document: ") + e.what());
    }
}

} // namespace bridges
