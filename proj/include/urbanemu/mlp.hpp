#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "urbanemu/dataset.hpp"
#include "urbanemu/errors.hpp"
#include "urbanemu/schema.hpp"

namespace urbanemu::mlp {

using dataset::NormStats;
using dataset::RowMatrix;

enum class Activation : std::uint8_t { relu = 0, tanh = 1, sigmoid = 2 };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct MlpConfig {
    std::size_t hidden_layers = 2;
    std::size_t neurons_per_layer = 256;
    Activation activation = Activation::relu;
    double l2 = 0.0;
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;
    double val_fraction = 0.25;
    std::uint64_t seed = 0;
    /// Multiplies the learning rate by `lr_decay` after `lr_patience` epochs without
    /// validation improvement. Off when lr_patience is 0.
    double lr_decay = 0.5;
    std::size_t lr_patience = 0;
    double min_learning_rate = 1e-6;

    void validate() const;
};

/// Fully connected layer; `weights` is (outputs x inputs).
struct DenseLayer {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

struct MlpModel {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::relu;
    FeatureSchema schema;
    NormStats input_norm;
    NormStats output_norm;
    /// Provenance and schema constants (training config, seed, losses, feature conventions).
    std::map<std::string, std::string> metadata;

    [[nodiscard]] std::size_t n_inputs() const;
    [[nodiscard]] std::size_t n_outputs() const;
    [[nodiscard]] std::size_t parameter_count() const;
    [[nodiscard]] bool has_normalization() const {
        return input_norm.size() == schema.n_inputs() && output_norm.size() == schema.n_outputs();
    }
    /// Throws SchemaError / TrainingError on inconsistent shapes or non-finite parameters.
    void validate() const;
};

/// He-uniform (ReLU) or Glorot-uniform (tanh, sigmoid) weights, zero biases.
MlpModel init_model(const MlpConfig& config, const FeatureSchema& schema);

/// y = b + W x, accumulated per output in ascending input order.
template <class T>
inline void dense_forward(const T* weights, const T* bias, std::size_t n_in, std::size_t n_out, const T* x, T* y) {
    for (std::size_t j = 0; j < n_out; ++j) {
        y[j] = bias[j];
    }
    for (std::size_t i = 0; i < n_in; ++i) {
        const T xi = x[i];
        const T* col = weights + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) {
            y[j] += col[j] * xi;
        }
    }
}

template <class T>
inline void activate(Activation a, T* v, std::size_t n) {
    switch (a) {
        case Activation::relu:
            for (std::size_t j = 0; j < n; ++j) v[j] = v[j] > T(0) ? v[j] : T(0);
            break;
        case Activation::tanh:
            for (std::size_t j = 0; j < n; ++j) v[j] = std::tanh(v[j]);
            break;
        case Activation::sigmoid:
            for (std::size_t j = 0; j < n; ++j) v[j] = T(1) / (T(1) + std::exp(-v[j]));
            break;
    }
}

/// Network-space forward pass (no normalization). Throws SchemaError on width mismatch.
RowMatrix forward(const MlpModel& model, const RowMatrix& x);

/// Physical-unit prediction: normalize, forward, denormalize.
RowMatrix predict(const MlpModel& model, const RowMatrix& x);

/// Mean over all elements of the squared error.
double loss_mse(const RowMatrix& pred, const RowMatrix& target);
/// l2 * sum of squared weights (biases excluded).
double l2_penalty(const MlpModel& model, double l2);

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;
    double loss = 0.0;  // MSE + L2 penalty at the evaluated parameters
};

/// Exact gradients of loss_mse + l2_penalty in network space. Throws TrainingError on non-finite values.
Gradients backward(const MlpModel& model, const RowMatrix& x, const RowMatrix& y, double l2);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of a flat parameter block; `t` counts from 1.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 long t, double lr, const AdamHyper& hyper = {});

struct AdamState {
    std::vector<Eigen::MatrixXd> m_w, v_w;
    std::vector<Eigen::VectorXd> m_b, v_b;
    long t = 0;

    static AdamState zeros_like(const MlpModel& model);
};

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state, double lr, const AdamHyper& hyper = {});

struct TrainReport {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;  // 1-based
    double best_val_loss = 0.0;
    bool stopped_early = false;
    std::vector<double> train_loss;  // per epoch, normalized units, includes L2 penalty
    std::vector<double> val_loss;    // per epoch, normalized-unit MSE
};

struct TrainResult {
    MlpModel model;
    TrainReport report;
};

/**
 * Fits input/target normalization on (X, Y), reserves a random
 * `val_fraction` of rows for early stopping and runs mini-batch Adam,
 * returning the best-validation parameters.
 */
TrainResult train(MlpModel model, const RowMatrix& X, const RowMatrix& Y, const MlpConfig& config);
TrainResult train(const dataset::TrainingMatrix& matrix, const MlpConfig& config);

/// Index of the lower-median element (position floor((n-1)/2) after a stable sort).
std::size_t lower_median_index(std::span<const double> values);

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    double score = 0.0;  // mean nMAE, %
    std::string error;
    TrainReport report;
};

struct RepeatedResult {
    MlpModel selected;
    std::size_t selected_index = 0;  // into outcomes
    std::vector<SeedOutcome> outcomes;
};

using Scorer = std::function<double(const MlpModel&)>;

/**
 * Trains with seeds `config.seed + i` for i < n_seeds, scores each model and
 * selects the lower-median score. Failed seeds are recorded and skipped.
 */
RepeatedResult train_repeated(const dataset::TrainingMatrix& matrix, const MlpConfig& config, std::size_t n_seeds,
                              const Scorer& scorer, std::size_t threads = 1);

struct SearchSpace {
    std::vector<std::size_t> hidden_layers;
    std::vector<std::size_t> neurons;
    std::vector<Activation> activations;
    std::vector<double> l2;

    [[nodiscard]] std::size_t size() const {
        return hidden_layers.size() * neurons.size() * activations.size() * l2.size();
    }
    /// Layers 1-3, neurons 16..496 step 32, relu/tanh/sigmoid, L2 1e-3..1e2.
    static SearchSpace standard();
};

struct GridOptions {
    std::size_t max_trials = 0;  // 0 = exhaustive
    std::uint64_t seed = 0;
};

struct GridEntry {
    MlpConfig config;
    double best_val_loss = 0.0;
};

/// Ranked ascending by best validation loss; ties keep enumeration order.
std::vector<GridEntry> grid_search(const SearchSpace& space, const dataset::TrainingMatrix& matrix,
                                   const MlpConfig& base, const GridOptions& options = {});

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFileError : public LoadError {
public:
    enum class Kind { io, magic, version, checksum, format, schema };
    ModelFileError(Kind kind, const std::string& what) : LoadError(what), kind_(kind) {}
    [[nodiscard]] Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/**
 * Binary layout, all integers and doubles little-endian:
 * magic "UEMUMLP\0", u32 version, u64 payload length, payload, u32 CRC-32
 * of the payload.
 */
std::string serialize(const MlpModel& model);
MlpModel deserialize(std::string_view bytes);

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);
/// Also requires the stored schema to equal `expected` (order included).
MlpModel load_model(const std::filesystem::path& path, const FeatureSchema& expected);

}  // namespace urbanemu::mlp
