#include "urbanemu/mlp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include "urbanemu/io.hpp"

namespace urbanemu::mlp {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd activated(Activation a, const MatrixXd& z) {
    switch (a) {
        case Activation::relu:
            return z.cwiseMax(0.0);
        case Activation::tanh:
            return z.unaryExpr([](double x) { return std::tanh(x); });
        case Activation::sigmoid:
            return z.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    }
    return z;
}

/// Derivative of the activation given pre-activation z and output a.
MatrixXd activation_slope(Activation act, const MatrixXd& z, const MatrixXd& a) {
    switch (act) {
        case Activation::relu:
            return z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
        case Activation::tanh:
            return (1.0 - a.array().square()).matrix();
        case Activation::sigmoid:
            return (a.array() * (1.0 - a.array())).matrix();
    }
    return a;
}

/// Column-batch forward pass (features x batch) keeping pre- and post-activations.
struct BatchCache {
    std::vector<MatrixXd> z;
    std::vector<MatrixXd> a;  // a[0] is the input
};

void forward_batch(const MlpModel& model, const MatrixXd& x, BatchCache& cache) {
    const std::size_t n_layers = model.layers.size();
    cache.z.resize(n_layers);
    cache.a.resize(n_layers + 1);
    cache.a[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = model.layers[l];
        cache.z[l].noalias() = layer.weights * cache.a[l];
        cache.z[l].colwise() += layer.bias;
        cache.a[l + 1] = (l + 1 < n_layers) ? activated(model.activation, cache.z[l]) : cache.z[l];
    }
}

/// Gradients of MSE + L2 for a column batch whose forward pass is in `cache`.
Gradients backward_batch(const MlpModel& model, const BatchCache& cache, const MatrixXd& y, double l2) {
    const std::size_t n_layers = model.layers.size();
    const MatrixXd& pred = cache.a[n_layers];
    const double count = static_cast<double>(pred.size());

    Gradients g;
    g.weights.resize(n_layers);
    g.bias.resize(n_layers);
    const MatrixXd err = pred - y;
    g.loss = err.squaredNorm() / count;
    if (l2 > 0.0) {
        for (const auto& layer : model.layers) {
            g.loss += l2 * layer.weights.squaredNorm();
        }
    }

    MatrixXd delta = (2.0 / count) * err;
    for (std::size_t l = n_layers; l-- > 0;) {
        g.weights[l].noalias() = delta * cache.a[l].transpose();
        if (l2 > 0.0) {
            g.weights[l] += (2.0 * l2) * model.layers[l].weights;
        }
        g.bias[l] = delta.rowwise().sum();
        if (!g.weights[l].allFinite() || !g.bias[l].allFinite()) {
            throw TrainingError("non-finite gradient in layer " + std::to_string(l));
        }
        if (l > 0) {
            MatrixXd upstream;
            upstream.noalias() = model.layers[l].weights.transpose() * delta;
            delta = upstream.cwiseProduct(activation_slope(model.activation, cache.z[l - 1], cache.a[l]));
        }
    }
    return g;
}

MatrixXd to_columns(const RowMatrix& m) {
    return m.transpose();
}

MatrixXd gather_columns(const RowMatrix& m, std::span<const std::size_t> rows) {
    MatrixXd out(m.cols(), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.col(static_cast<Eigen::Index>(k)) = m.row(static_cast<Eigen::Index>(rows[k])).transpose();
    }
    return out;
}

/// MSE over `rows`, evaluated in chunks.
double dataset_mse(const MlpModel& model, const RowMatrix& x, const RowMatrix& y, std::span<const std::size_t> rows) {
    constexpr std::size_t kChunk = 4096;
    BatchCache cache;
    double sum = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += kChunk) {
        const auto chunk = rows.subspan(start, std::min(kChunk, rows.size() - start));
        forward_batch(model, gather_columns(x, chunk), cache);
        sum += (cache.a.back() - gather_columns(y, chunk)).squaredNorm();
    }
    return sum / static_cast<double>(rows.size() * static_cast<std::size_t>(y.cols()));
}

void put_meta(MlpModel& m, const std::string& key, double value) {
    m.metadata[key] = io::format_double(value);
}

void put_meta(MlpModel& m, const std::string& key, std::size_t value) {
    m.metadata[key] = std::to_string(value);
}

}  // namespace

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu:
            return "relu";
        case Activation::tanh:
            return "tanh";
        case Activation::sigmoid:
            return "sigmoid";
    }
    return "?";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ConfigError("unknown activation '" + name + "' (expected relu, tanh or sigmoid)");
}

void MlpConfig::validate() const {
    if (hidden_layers < 1 || neurons_per_layer < 1) {
        throw ConfigError("MLP needs at least one hidden layer with at least one neuron");
    }
    if (!(l2 >= 0.0) || !(learning_rate > 0.0) || batch_size < 1) {
        throw ConfigError("MLP l2 must be >= 0, learning rate > 0 and batch size >= 1");
    }
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        throw ConfigError("validation fraction must lie in (0, 1)");
    }
    if (!(lr_decay > 0.0 && lr_decay <= 1.0) || !(min_learning_rate > 0.0)) {
        throw ConfigError("learning-rate decay must lie in (0, 1] and the minimum rate be positive");
    }
}

std::size_t MlpModel::n_inputs() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols());
}

std::size_t MlpModel::n_outputs() const {
    return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weights.rows());
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) {
        n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    }
    return n;
}

void MlpModel::validate() const {
    if (layers.size() < 2) {
        throw SchemaError("model needs at least one hidden layer and an output layer");
    }
    schema.validate();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.bias.size() != layer.weights.rows() || layer.weights.size() == 0) {
            throw SchemaError("layer " + std::to_string(l) + " bias does not match its weights");
        }
        if (l > 0 && layer.weights.cols() != layers[l - 1].weights.rows()) {
            throw SchemaError("layer " + std::to_string(l) + " input width does not match the previous layer");
        }
        if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
            throw TrainingError("layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
    if (n_inputs() != schema.n_inputs() || n_outputs() != schema.n_outputs()) {
        throw SchemaError("layer shapes do not match the feature schema");
    }
    const bool partial = !input_norm.mean.empty() || !output_norm.mean.empty();
    if (partial && !has_normalization()) {
        throw SchemaError("normalization statistics do not match the feature schema");
    }
}

MlpModel init_model(const MlpConfig& config, const FeatureSchema& schema) {
    config.validate();
    schema.validate();
    MlpModel model;
    model.activation = config.activation;
    model.schema = schema;

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> widths{schema.n_inputs()};
    for (std::size_t l = 0; l < config.hidden_layers; ++l) {
        widths.push_back(config.neurons_per_layer);
    }
    widths.push_back(schema.n_outputs());

    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto fan_in = static_cast<double>(widths[l]);
        const auto fan_out = static_cast<double>(widths[l + 1]);
        const double limit = config.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                                   : std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer;
        layer.weights.resize(static_cast<Eigen::Index>(widths[l + 1]), static_cast<Eigen::Index>(widths[l]));
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
            layer.weights.data()[i] = dist(rng);
        }
        layer.bias = VectorXd::Zero(layer.weights.rows());
        model.layers.push_back(std::move(layer));
    }
    return model;
}

RowMatrix forward(const MlpModel& model, const RowMatrix& x) {
    if (static_cast<std::size_t>(x.cols()) != model.n_inputs()) {
        throw SchemaError("input width " + std::to_string(x.cols()) + " does not match model width " +
                          std::to_string(model.n_inputs()));
    }
    std::size_t widest = model.n_inputs();
    for (const auto& l : model.layers) {
        widest = std::max(widest, static_cast<std::size_t>(l.weights.rows()));
    }
    std::vector<double> cur(widest), next(widest);
    RowMatrix y(x.rows(), static_cast<Eigen::Index>(model.n_outputs()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        std::copy_n(x.row(r).data(), model.n_inputs(), cur.begin());
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const auto& layer = model.layers[l];
            const auto n_in = static_cast<std::size_t>(layer.weights.cols());
            const auto n_out = static_cast<std::size_t>(layer.weights.rows());
            dense_forward(layer.weights.data(), layer.bias.data(), n_in, n_out, cur.data(), next.data());
            if (l + 1 < model.layers.size()) {
                activate(model.activation, next.data(), n_out);
            }
            std::swap(cur, next);
        }
        std::copy_n(cur.begin(), model.n_outputs(), y.row(r).data());
    }
    return y;
}

RowMatrix predict(const MlpModel& model, const RowMatrix& x) {
    if (!model.has_normalization()) {
        throw SchemaError("model carries no normalization statistics");
    }
    return dataset::invert_norm(forward(model, dataset::apply_norm(x, model.input_norm)), model.output_norm);
}

double loss_mse(const RowMatrix& pred, const RowMatrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw SchemaError("prediction and target shapes differ");
    }
    if (pred.size() == 0) {
        throw SchemaError("empty prediction");
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

double l2_penalty(const MlpModel& model, double l2) {
    double sum = 0.0;
    for (const auto& layer : model.layers) {
        sum += layer.weights.squaredNorm();
    }
    return l2 * sum;
}

Gradients backward(const MlpModel& model, const RowMatrix& x, const RowMatrix& y, double l2) {
    if (static_cast<std::size_t>(x.cols()) != model.n_inputs() ||
        static_cast<std::size_t>(y.cols()) != model.n_outputs() || x.rows() != y.rows()) {
        throw SchemaError("batch shapes do not match the model");
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw TrainingError("non-finite batch");
    }
    BatchCache cache;
    forward_batch(model, to_columns(x), cache);
    return backward_batch(model, cache, to_columns(y), l2);
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 long t, double lr, const AdamHyper& h) {
    if (t < 1) {
        throw ConfigError("Adam step counter starts at 1");
    }
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
}

AdamState AdamState::zeros_like(const MlpModel& model) {
    AdamState s;
    for (const auto& l : model.layers) {
        s.m_w.push_back(MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
        s.v_w.push_back(MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
        s.m_b.push_back(VectorXd::Zero(l.bias.size()));
        s.v_b.push_back(VectorXd::Zero(l.bias.size()));
    }
    return s;
}

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state, double lr, const AdamHyper& hyper) {
    ++state.t;
    auto span_of = [](auto& m) { return std::span<double>(m.data(), static_cast<std::size_t>(m.size())); };
    auto cspan_of = [](const auto& m) {
        return std::span<const double>(m.data(), static_cast<std::size_t>(m.size()));
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        adam_update(span_of(model.layers[l].weights), cspan_of(grads.weights[l]), span_of(state.m_w[l]),
                    span_of(state.v_w[l]), state.t, lr, hyper);
        adam_update(span_of(model.layers[l].bias), cspan_of(grads.bias[l]), span_of(state.m_b[l]),
                    span_of(state.v_b[l]), state.t, lr, hyper);
    }
}

TrainResult train(MlpModel model, const RowMatrix& X, const RowMatrix& Y, const MlpConfig& config) {
    config.validate();
    model.validate();
    if (X.rows() != Y.rows() || static_cast<std::size_t>(X.cols()) != model.n_inputs() ||
        static_cast<std::size_t>(Y.cols()) != model.n_outputs()) {
        throw SchemaError("training matrix does not match the model schema");
    }
    const auto n = static_cast<std::size_t>(X.rows());
    const auto n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n)));
    if (n_val < 1 || n_val >= n) {
        throw DataError("too few rows (" + std::to_string(n) + ") for a validation split");
    }

    model.input_norm = dataset::fit_norm(X, model.schema.inputs);
    model.output_norm = dataset::fit_norm(Y, model.schema.outputs);
    const RowMatrix Xn = dataset::apply_norm(X, model.input_norm);
    const RowMatrix Yn = dataset::apply_norm(Y, model.output_norm);

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<long>(n_val));
    std::vector<std::size_t> train_rows(order.begin() + static_cast<long>(n_val), order.end());

    TrainReport report;
    AdamState adam = AdamState::zeros_like(model);
    std::vector<DenseLayer> best = model.layers;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t wait = 0;
    std::size_t plateau = 0;
    double lr = config.learning_rate;
    BatchCache cache;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(train_rows.begin(), train_rows.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < train_rows.size(); start += config.batch_size) {
            const std::span<const std::size_t> batch(train_rows.data() + start,
                                                     std::min(config.batch_size, train_rows.size() - start));
            forward_batch(model, gather_columns(Xn, batch), cache);
            const Gradients g = backward_batch(model, cache, gather_columns(Yn, batch), config.l2);
            loss_sum += g.loss * static_cast<double>(batch.size());
            adam_step(model, g, adam, lr);
        }
        const double train_loss = loss_sum / static_cast<double>(train_rows.size());
        const double val_loss = dataset_mse(model, Xn, Yn, val_rows);
        if (!std::isfinite(val_loss) || !std::isfinite(train_loss)) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch));
        }
        report.train_loss.push_back(train_loss);
        report.val_loss.push_back(val_loss);
        report.epochs_run = epoch;
        if (val_loss < best_val) {
            best_val = val_loss;
            best = model.layers;
            report.best_epoch = epoch;
            wait = 0;
            plateau = 0;
        } else if (++wait >= config.patience) {
            report.stopped_early = true;
            break;
        } else if (config.lr_patience > 0 && ++plateau >= config.lr_patience) {
            lr = std::max(lr * config.lr_decay, config.min_learning_rate);
            plateau = 0;
        }
    }
    model.layers = std::move(best);
    report.best_val_loss = best_val;

    model.metadata["normalization"] = "zscore-population";
    model.metadata["train.activation"] = to_string(config.activation);
    put_meta(model, "train.hidden_layers", config.hidden_layers);
    put_meta(model, "train.neurons_per_layer", config.neurons_per_layer);
    put_meta(model, "train.l2", config.l2);
    put_meta(model, "train.learning_rate", config.learning_rate);
    if (config.lr_patience > 0) {
        put_meta(model, "train.lr_decay", config.lr_decay);
        put_meta(model, "train.lr_patience", config.lr_patience);
        put_meta(model, "train.min_learning_rate", config.min_learning_rate);
    }
    put_meta(model, "train.batch_size", config.batch_size);
    put_meta(model, "train.max_epochs", config.max_epochs);
    put_meta(model, "train.patience", config.patience);
    put_meta(model, "train.val_fraction", config.val_fraction);
    put_meta(model, "train.seed", static_cast<std::size_t>(config.seed));
    put_meta(model, "train.rows", n);
    put_meta(model, "train.epochs_run", report.epochs_run);
    put_meta(model, "train.best_epoch", report.best_epoch);
    put_meta(model, "train.best_val_loss", report.best_val_loss);
    return {std::move(model), std::move(report)};
}

TrainResult train(const dataset::TrainingMatrix& matrix, const MlpConfig& config) {
    return train(init_model(config, matrix.schema), matrix.X, matrix.Y, config);
}

std::size_t lower_median_index(std::span<const double> values) {
    if (values.empty()) {
        throw DataError("median of an empty list");
    }
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    return idx[(values.size() - 1) / 2];
}

RepeatedResult train_repeated(const dataset::TrainingMatrix& matrix, const MlpConfig& config, std::size_t n_seeds,
                              const Scorer& scorer, std::size_t threads) {
    if (n_seeds < 1) {
        throw ConfigError("need at least one seed");
    }
    std::vector<SeedOutcome> outcomes(n_seeds);
    std::vector<std::optional<MlpModel>> models(n_seeds);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n_seeds; i = next++) {
            MlpConfig c = config;
            c.seed = config.seed + i;
            outcomes[i].seed = c.seed;
            try {
                TrainResult r = train(matrix, c);
                outcomes[i].report = r.report;
                outcomes[i].score = scorer(r.model);
                if (!std::isfinite(outcomes[i].score)) {
                    throw TrainingError("non-finite score");
                }
                outcomes[i].ok = true;
                models[i] = std::move(r.model);
            } catch (const std::exception& e) {
                outcomes[i].ok = false;
                outcomes[i].error = e.what();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, n_seeds);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
    }

    std::vector<std::size_t> survivors;
    std::vector<double> scores;
    for (std::size_t i = 0; i < n_seeds; ++i) {
        if (outcomes[i].ok) {
            survivors.push_back(i);
            scores.push_back(outcomes[i].score);
        }
    }
    if (survivors.empty()) {
        throw TrainingError("all " + std::to_string(n_seeds) + " seeds failed; first error: " + outcomes[0].error);
    }
    RepeatedResult result;
    result.selected_index = survivors[lower_median_index(scores)];
    result.selected = std::move(*models[result.selected_index]);
    put_meta(result.selected, "selection.n_seeds", n_seeds);
    put_meta(result.selected, "selection.survivors", survivors.size());
    put_meta(result.selected, "selection.mean_nmae", outcomes[result.selected_index].score);
    result.outcomes = std::move(outcomes);
    return result;
}

SearchSpace SearchSpace::standard() {
    SearchSpace s;
    s.hidden_layers = {1, 2, 3};
    for (std::size_t n = 16; n <= 512; n += 32) {
        s.neurons.push_back(n);
    }
    s.activations = {Activation::relu, Activation::tanh, Activation::sigmoid};
    s.l2 = {1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2};
    return s;
}

std::vector<GridEntry> grid_search(const SearchSpace& space, const dataset::TrainingMatrix& matrix,
                                   const MlpConfig& base, const GridOptions& options) {
    const std::size_t total = space.size();
    if (total == 0) {
        throw ConfigError("hyperparameter search space is empty");
    }
    std::vector<std::size_t> picks(total);
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    if (options.max_trials > 0 && options.max_trials < total) {
        std::mt19937_64 rng(options.seed);
        std::vector<std::size_t> sampled;
        std::sample(picks.begin(), picks.end(), std::back_inserter(sampled), options.max_trials, rng);
        picks = std::move(sampled);
    }

    std::vector<GridEntry> entries;
    for (std::size_t flat : picks) {
        std::size_t rest = flat;
        const std::size_t i_l2 = rest % space.l2.size();
        rest /= space.l2.size();
        const std::size_t i_act = rest % space.activations.size();
        rest /= space.activations.size();
        const std::size_t i_neu = rest % space.neurons.size();
        rest /= space.neurons.size();
        MlpConfig c = base;
        c.hidden_layers = space.hidden_layers[rest];
        c.neurons_per_layer = space.neurons[i_neu];
        c.activation = space.activations[i_act];
        c.l2 = space.l2[i_l2];
        entries.push_back({c, train(matrix, c).report.best_val_loss});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const GridEntry& a, const GridEntry& b) { return a.best_val_loss < b.best_val_loss; });
    return entries;
}

}  // namespace urbanemu::mlp
