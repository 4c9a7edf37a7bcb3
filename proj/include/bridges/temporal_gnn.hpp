#pragma once

// Temporal graph network for structural anomaly detection.
//
// Each GCN layer computes H' = act(Â H W) with Â the symmetrically normalized
// adjacency. Layer weights evolve from year to year through a GRU cell that
// treats every column of W as an independent hidden vector and feeds the
// previous weight back in as the input (self-evolution):
//
//   z  = sigmoid(Uz W + Vz W + bz)
//   r  = sigmoid(Ur W + Vr W + br)
//   c  = tanh(Uc W + Vc (r o W) + bc)
//   W' = (1 - z) o W + z o c
//
// Training fits sigmoid(Z_t Z_t^T) to next year's adjacency A_{t+1} by full
// batch gradient descent with exact backpropagation through the unrolled
// sequence. A bank's anomaly score is the within-year z-score of its row-wise
// reconstruction error.

#include "bridges/dtw_network.hpp"
#include "bridges/matrix.hpp"
#include "bridges/panel.hpp"
#include "bridges/risk_metrics.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bridges {

enum class Activation { ReLU, Identity, Sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct GcnLayerParams {
    Matrix weight; // in_dim x out_dim
    Activation activation = Activation::ReLU;

    bool operator==(const GcnLayerParams&) const = default;
};

/// GRU over hidden vectors of dimension d (= in_dim of the evolved layer).
struct GruCellParams {
    Matrix update_input, update_hidden, update_bias; // d x d, d x d, d x 1
    Matrix reset_input, reset_hidden, reset_bias;
    Matrix candidate_input, candidate_hidden, candidate_bias;

    std::size_t dim() const { return update_bias.rows(); }
    bool operator==(const GruCellParams&) const = default;
};

struct TemporalModelState {
    std::vector<GcnLayerParams> layers;
    std::vector<GruCellParams> gru; // one per layer
    std::string feature_rule = "composite_components+weighted_degree";
    std::uint64_t rng_seed = 0;
    std::vector<std::string> roster; // set by training; empty = any roster

    bool operator==(const TemporalModelState&) const = default;
};

struct ModelConfig {
    std::size_t hidden_dim = 8;
    std::size_t embedding_dim = 8;
    Activation hidden_activation = Activation::ReLU;
    Activation output_activation = Activation::Identity;
    std::uint64_t seed = 42;
};

/// Glorot-uniform weights from the seeded generator, zero biases.
TemporalModelState init_model(std::size_t feature_dim, const ModelConfig& config);

/// All trainable matrices in a fixed order.
std::vector<Matrix*> parameters(TemporalModelState& model);
std::vector<const Matrix*> parameters(const TemporalModelState& model);

/// Graph snapshots with node features over a fixed roster.
struct TemporalSequence {
    std::vector<std::string> roster;
    std::vector<int> years;
    std::vector<Matrix> adjacency; // N x N per year
    std::vector<Matrix> features;  // N x F per year
};

/// Features per bank and year: the z-scored composite components (missing
/// components read as 0) followed by weighted degree / (N - 1).
TemporalSequence build_sequence(const DynamicNetwork& network, const BankPanel& panel, const CompositeIndexSpec& spec);

/// Weighted degree / (N - 1) as the single node feature.
TemporalSequence structural_sequence(const DynamicNetwork& network);

/// D^{-1/2} A D^{-1/2} with D the row sums of A. A carries its own unit
/// diagonal, so no identity is added.
Matrix normalize_adjacency(const Matrix& adjacency);

Matrix gcn_forward(const Matrix& norm_adj, const Matrix& features, const std::vector<GcnLayerParams>& layers);

Matrix evolve_weights(const GruCellParams& gru, const Matrix& prev_weight);

/// Mean over transitions t -> t+1 of mean((sigmoid(Z_t Z_t^T) - A_{t+1})^2).
double sequence_loss(const TemporalModelState& model, const TemporalSequence& seq);

struct LossGradient {
    double loss = 0.0;
    TemporalModelState gradient; // same shapes as the model
};

LossGradient loss_and_gradient(const TemporalModelState& model, const TemporalSequence& seq);

enum class Optimizer { GradientDescent, Adam };

struct TrainOptions {
    int epochs = 200;
    double learning_rate = 0.01;
    Optimizer optimizer = Optimizer::GradientDescent;
};

struct TrainResult {
    TemporalModelState model;
    std::vector<double> loss_trace; // initial loss, then the loss after each epoch
};

TrainResult train(TemporalModelState model, const TemporalSequence& seq, const TrainOptions& options);

/// Year-t embeddings for every year, computed with the evolved weights.
std::vector<Matrix> embeddings(const TemporalModelState& model, const TemporalSequence& seq);

enum class AnomalyMethod { TGNN, Baseline };

std::string_view to_string(AnomalyMethod m);
std::optional<AnomalyMethod> parse_anomaly_method(std::string_view name);

struct AnomalyEntry {
    int year = 0;
    std::string bank_id;
    AnomalyMethod method = AnomalyMethod::TGNN;
    double score = 0.0;
    int rank = 0;
};

struct AnomalyExclusion {
    int year;
    std::string bank_id;
    AnomalyMethod method;
};

struct AnomalyReport {
    std::vector<AnomalyEntry> entries; // grouped by (method, year), rank order
    std::vector<AnomalyExclusion> excluded;

    void merge(const AnomalyReport& other);
};

/// Scores years[0..T-2]; the score for year t measures how badly year t's
/// embeddings predict year t+1's structure.
AnomalyReport anomaly_scores(const TemporalModelState& model, const TemporalSequence& seq);

/// Single-year robust z-scores (median / 1.4826 MAD) of the four risk ratios;
/// score = largest absolute value. When MAD is 0 the mean absolute deviation
/// (scaled by 1.2533) stands in; when that is also 0 the ratio scores 0.
AnomalyReport baseline_anomaly(const BankPanel& panel, int year);

std::vector<std::string> top_k(const AnomalyReport& report, int year, std::size_t k,
                               AnomalyMethod method = AnomalyMethod::TGNN);

void write_anomaly_csv(std::ostream& os, const AnomalyReport& report);
AnomalyReport read_anomaly_csv(std::string_view text);

std::string model_to_json(const TemporalModelState& model);
TemporalModelState model_from_json(std::string_view text);

} // namespace bridges
