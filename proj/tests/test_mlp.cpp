#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "urbanemu/errors.hpp"
#include "urbanemu/io.hpp"
#include "urbanemu/mlp.hpp"

using namespace urbanemu;
using namespace urbanemu::mlp;
using testsupport::toy_schema;
namespace fs = std::filesystem;

namespace {

MlpConfig small_config(std::size_t layers, std::size_t neurons, Activation a = Activation::relu, std::uint64_t seed = 1) {
    MlpConfig c;
    c.hidden_layers = layers;
    c.neurons_per_layer = neurons;
    c.activation = a;
    c.seed = seed;
    return c;
}

/// Linear toy data y = A x + b.
dataset::TrainingMatrix linear_data(std::size_t rows, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    dataset::TrainingMatrix m;
    m.schema = toy_schema(3, 2);
    m.X.resize(static_cast<Eigen::Index>(rows), 3);
    m.Y.resize(static_cast<Eigen::Index>(rows), 2);
    for (Eigen::Index r = 0; r < m.X.rows(); ++r) {
        for (int c = 0; c < 3; ++c) m.X(r, c) = n(rng);
        m.Y(r, 0) = 2.0 * m.X(r, 0) - m.X(r, 1) + 0.5;
        m.Y(r, 1) = 0.3 * m.X(r, 2) + m.X(r, 1) - 1.0;
    }
    m.row_rate.assign(rows, 1800.0);
    return m;
}

MlpModel normalized(MlpModel m) {
    const std::size_t ni = m.schema.n_inputs(), no = m.schema.n_outputs();
    m.input_norm = {m.schema.inputs, std::vector<double>(ni, 1.0), std::vector<double>(ni, 2.0)};
    m.output_norm = {m.schema.outputs, std::vector<double>(no, -3.0), std::vector<double>(no, 0.5)};
    return m;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "urbanemu_mlp_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_SUITE("mlp") {

TEST_CASE("initialization") {
    const auto a = init_model(small_config(2, 256), emulator_schema());
    CHECK(a.parameter_count() == 69892);
    CHECK(a.n_inputs() == 11);
    CHECK(a.n_outputs() == 4);
    const auto b = init_model(small_config(2, 256), emulator_schema());
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK(a.layers[l].weights == b.layers[l].weights);
        CHECK(a.layers[l].bias.isZero());
    }
    const double he = std::sqrt(6.0 / 11.0);
    CHECK(a.layers[0].weights.cwiseAbs().maxCoeff() <= he);
    const auto g = init_model(small_config(1, 8, Activation::tanh), toy_schema(4, 2));
    CHECK(g.layers[0].weights.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 12.0));
    CHECK_THROWS_AS(init_model(small_config(0, 8), toy_schema(2, 1)), ConfigError);
}

TEST_CASE("forward pass") {
    auto m = init_model(small_config(1, 2), toy_schema(2, 1));
    for (auto& l : m.layers) l.weights.setZero();
    m.layers[1].bias << 0.75;
    RowMatrix x(3, 2);
    x << 1, 2, -3, 4, 5, 6;
    CHECK(forward(m, x) == RowMatrix::Constant(3, 1, 0.75));

    // Hand-computed 2-2-1 network.
    m.layers[0].weights << 1, -1, 2, 0.5;
    m.layers[0].bias << 0.5, -4;
    m.layers[1].weights << 3, -2;
    m.layers[1].bias << 1;
    RowMatrix one(1, 2);
    one << 2, 1;
    // hidden: relu(2 - 1 + 0.5) = 1.5, relu(4 + 0.5 - 4) = 0.5; output 3*1.5 - 2*0.5 + 1 = 4.5
    CHECK(forward(m, one)(0, 0) == doctest::Approx(4.5));

    const auto r = init_model(small_config(2, 8), toy_schema(2, 1));
    RowMatrix batch = RowMatrix::Random(5, 2);
    RowMatrix flipped = batch.colwise().reverse();
    CHECK(forward(r, flipped) == forward(r, batch).colwise().reverse().eval());
    CHECK_THROWS_AS(forward(r, RowMatrix::Zero(2, 3)), SchemaError);
}

TEST_CASE("loss and penalty") {
    auto m = init_model(small_config(1, 4), toy_schema(2, 2));
    RowMatrix p = RowMatrix::Random(6, 2);
    CHECK(loss_mse(p, p) == 0.0);
    CHECK(loss_mse(p, (p.array() - 1.0).matrix()) == doctest::Approx(1.0));
    double sq = 0.0;
    for (const auto& l : m.layers) sq += l.weights.squaredNorm();
    m.layers[0].bias.setConstant(9.0);
    CHECK(l2_penalty(m, 0.1) == doctest::Approx(0.1 * sq));
    RowMatrix t = RowMatrix::Random(6, 2);
    double brute = 0.0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 2; ++j) brute += (p(i, j) - t(i, j)) * (p(i, j) - t(i, j));
    CHECK(loss_mse(p, t) == doctest::Approx(brute / 12.0).epsilon(1e-14));
    CHECK_THROWS(loss_mse(p, RowMatrix::Zero(6, 3)));
}

TEST_CASE("analytic gradients match finite differences") {
    for (Activation a : {Activation::relu, Activation::tanh, Activation::sigmoid}) {
        auto m = init_model(small_config(2, 16, a, 4), toy_schema(5, 3));
        for (auto& l : m.layers) l.bias.setRandom();
        RowMatrix x = RowMatrix::Random(7, 5);
        RowMatrix y = RowMatrix::Random(7, 3);
        CHECK(testsupport::gradient_check(m, x, y, 0.01) < 1e-4);
    }
}

TEST_CASE("gradient special cases") {
    auto m = init_model(small_config(1, 6, Activation::tanh), toy_schema(3, 2));
    RowMatrix x = RowMatrix::Random(4, 3);
    const RowMatrix y = forward(m, x);
    const auto g = backward(m, x, y, 0.0);
    for (const auto& w : g.weights) CHECK(w.isZero());
    for (const auto& b : g.bias) CHECK(b.isZero());

    // With the output layer zeroed the prediction is 0: loss and output-bias gradient scale with the targets.
    for (auto& w : m.layers.back().weights.reshaped()) w = 0.0;
    const RowMatrix t = RowMatrix::Random(4, 2);
    const auto g1 = backward(m, x, t, 0.0);
    const auto g3 = backward(m, x, (3.0 * t).eval(), 0.0);
    CHECK(g3.loss == doctest::Approx(9.0 * g1.loss));
    CHECK((g3.bias.back() - 3.0 * g1.bias.back()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g3.weights.back() - 3.0 * g1.weights.back()).cwiseAbs().maxCoeff() < 1e-12);

    RowMatrix bad = x;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(backward(m, bad, t, 0.0), TrainingError);
}

TEST_CASE("Adam updates") {
    std::vector<double> p{1.0, -2.0}, m(2, 0.0), v(2, 0.0);
    const std::vector<double> g{0.3, -5.0};
    adam_update(p, g, m, v, 1, 0.01);
    CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));

    std::vector<double> q{0.0}, mq{0.0}, vq{0.0};
    double last = 0.0;
    for (long t = 1; t <= 5000; ++t) {
        const double before = q[0];
        adam_update(q, std::vector<double>{2.5}, mq, vq, t, 0.001);
        last = before - q[0];
    }
    CHECK(last == doctest::Approx(0.001).epsilon(1e-3));

    std::vector<double> z{4.0}, mz{0.0}, vz{0.0};
    adam_update(z, std::vector<double>{0.0}, mz, vz, 1, 0.1);
    CHECK(z[0] == 4.0);
}

TEST_CASE("training fits a linear map") {
    const auto data = linear_data(600, 3);
    MlpConfig c = small_config(1, 16, Activation::tanh, 5);
    c.batch_size = 32;
    c.learning_rate = 3e-3;
    c.max_epochs = 400;
    c.patience = 40;
    const auto r = train(data, c);
    CHECK(r.report.best_val_loss < 1e-3);
    CHECK(r.report.best_val_loss == *std::min_element(r.report.val_loss.begin(), r.report.val_loss.end()));
    CHECK(r.report.val_loss[r.report.best_epoch - 1] == r.report.best_val_loss);
    const RowMatrix pred = predict(r.model, data.X.topRows(5));
    CHECK((pred - data.Y.topRows(5)).cwiseAbs().maxCoeff() < 0.1);

    const auto again = train(data, c);
    for (std::size_t l = 0; l < r.model.layers.size(); ++l) {
        CHECK(again.model.layers[l].weights == r.model.layers[l].weights);
        CHECK(again.model.layers[l].bias == r.model.layers[l].bias);
    }
}

TEST_CASE("early stopping boundary") {
    const auto data = linear_data(200, 9);
    MlpConfig c = small_config(1, 8, Activation::relu, 2);
    c.patience = 0;
    c.learning_rate = 0.5;  // large enough to overshoot quickly
    c.max_epochs = 100;
    const auto r = train(data, c);
    CHECK(r.report.stopped_early);
    CHECK(r.report.epochs_run == r.report.best_epoch + 1);
}

TEST_CASE("full-batch training loss does not increase at a small rate") {
    const auto data = linear_data(120, 4);
    MlpConfig c = small_config(2, 12, Activation::tanh, 6);
    c.batch_size = 1000;
    c.learning_rate = 1e-4;
    c.max_epochs = 60;
    c.patience = 60;
    const auto r = train(data, c);
    for (std::size_t e = 1; e < r.report.train_loss.size(); ++e) {
        CHECK(r.report.train_loss[e] <= r.report.train_loss[e - 1]);
    }
}

TEST_CASE("learning-rate reduction on plateau") {
    const auto data = linear_data(300, 8);
    MlpConfig c = small_config(1, 8, Activation::tanh, 1);
    c.max_epochs = 30;
    c.lr_patience = 2;
    const auto r = train(data, c);
    CHECK(r.model.metadata.at("train.lr_patience") == "2");
    c.lr_decay = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("lower median") {
    const std::vector<double> odd{3, 1, 2};
    CHECK(odd[lower_median_index(odd)] == 2.0);
    const std::vector<double> even{4, 1, 3, 2};
    CHECK(even[lower_median_index(even)] == 2.0);
    const std::vector<double> single{7};
    CHECK(lower_median_index(single) == 0);
    const std::vector<double> ties{5, 5, 1, 9};
    CHECK(lower_median_index(ties) == 0);
}

TEST_CASE("repeated training selects the lower median") {
    const auto data = linear_data(80, 2);
    MlpConfig c = small_config(1, 4, Activation::tanh, 100);
    c.max_epochs = 2;
    auto stub = [](std::vector<double> scores) {
        return [scores](const MlpModel& m) {
            return scores[std::stoul(m.metadata.at("train.seed")) - 100];
        };
    };
    auto r3 = train_repeated(data, c, 3, stub({3, 1, 2}));
    CHECK(r3.outcomes[r3.selected_index].score == 2.0);
    CHECK(r3.selected.metadata.at("train.seed") == "102");

    auto r4 = train_repeated(data, c, 4, stub({4, 1, 3, 2}));
    CHECK(r4.outcomes[r4.selected_index].score == 2.0);
    CHECK(r4.selected_index == 3);

    auto r1 = train_repeated(data, c, 1, stub({42}));
    CHECK(r1.selected_index == 0);

    // A failing seed is recorded and skipped.
    auto flaky = [](const MlpModel& m) -> double {
        if (m.metadata.at("train.seed") == "101") throw TrainingError("boom");
        return std::stod(m.metadata.at("train.seed"));
    };
    auto rf = train_repeated(data, c, 3, flaky);
    CHECK_FALSE(rf.outcomes[1].ok);
    CHECK(rf.outcomes[1].error == "boom");
    CHECK(rf.outcomes[rf.selected_index].score == 100.0);

    auto failing = [](const MlpModel&) -> double { throw TrainingError("always"); };
    CHECK_THROWS_AS(train_repeated(data, c, 2, failing), TrainingError);

    // Threads do not change the outcome.
    auto threaded = train_repeated(data, c, 4, stub({4, 1, 3, 2}), 3);
    CHECK(threaded.selected_index == 3);
    CHECK(threaded.selected.layers[0].weights == r4.selected.layers[0].weights);
}

TEST_CASE("grid search") {
    // XOR-like target: a product of signs cannot be fitted by a single tanh layer of width 1.
    dataset::TrainingMatrix m;
    m.schema = toy_schema(2, 1);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    m.X.resize(400, 2);
    m.Y.resize(400, 1);
    for (Eigen::Index r = 0; r < 400; ++r) {
        m.X(r, 0) = u(rng);
        m.X(r, 1) = u(rng);
        m.Y(r, 0) = m.X(r, 0) * m.X(r, 1) > 0 ? 1.0 : -1.0;
    }
    MlpConfig base = small_config(1, 1, Activation::tanh);
    base.max_epochs = 60;
    base.learning_rate = 1e-2;
    base.batch_size = 32;
    SearchSpace s;
    s.hidden_layers = {1, 2};
    s.neurons = {8};
    s.activations = {Activation::tanh};
    s.l2 = {0.0};
    const auto ranked = grid_search(s, m, base);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked.front().config.hidden_layers == 2);
    CHECK(ranked.front().best_val_loss < ranked.back().best_val_loss);

    SearchSpace one = s;
    one.hidden_layers = {1};
    CHECK(grid_search(one, m, base).size() == 1);
    CHECK_THROWS_AS(grid_search(SearchSpace{}, m, base), ConfigError);

    const auto standard = SearchSpace::standard();
    CHECK(standard.neurons.front() == 16);
    CHECK(standard.neurons.back() == 496);
    CHECK(standard.size() == 3 * 16 * 3 * 6);

    GridOptions go;
    go.max_trials = 1;
    go.seed = 4;
    const auto a = grid_search(s, m, base, go);
    const auto b = grid_search(s, m, base, go);
    CHECK(a.front().config.hidden_layers == b.front().config.hidden_layers);
}

TEST_CASE("model file round trip") {
    auto m = normalized(init_model(small_config(2, 16), emulator_schema()));
    for (auto& l : m.layers) l.bias.setRandom();
    m.metadata["note"] = "x";
    const auto p = scratch("m.uemu");
    save_model(m, p);
    const auto back = load_model(p, emulator_schema());
    CHECK(back.input_norm == m.input_norm);
    CHECK(back.output_norm == m.output_norm);
    CHECK(back.metadata == m.metadata);
    CHECK(back.activation == m.activation);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(back.layers[l].weights == m.layers[l].weights);
        CHECK(back.layers[l].bias == m.layers[l].bias);
    }
    const RowMatrix x = RowMatrix::Random(9, 11) * 100.0;
    CHECK(predict(back, x) == predict(m, x));
}

TEST_CASE("model file damage is detected") {
    const auto m = normalized(init_model(small_config(1, 4), emulator_schema()));
    const std::string bytes = serialize(m);
    auto kind_of = [](std::string_view b) {
        try {
            deserialize(b);
        } catch (const ModelFileError& e) {
            return e.kind();
        }
        FAIL("accepted damaged bytes");
        return ModelFileError::Kind::io;
    };
    CHECK(kind_of(std::string_view(bytes).substr(0, bytes.size() - 9)) == ModelFileError::Kind::checksum);
    std::string flipped = bytes;
    flipped[40] = static_cast<char>(flipped[40] ^ 0x10);
    CHECK(kind_of(flipped) == ModelFileError::Kind::checksum);
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK(kind_of(magic) == ModelFileError::Kind::magic);
    std::string version = bytes;
    version[8] = 9;
    CHECK(kind_of(version) == ModelFileError::Kind::version);

    // Same feature set in a different order must not load against the host schema.
    FeatureSchema swapped = emulator_schema();
    std::swap(swapped.inputs[1], swapped.inputs[2]);
    std::swap(swapped.input_units[1], swapped.input_units[2]);
    auto other = m;
    other.schema = swapped;
    other.input_norm.names = swapped.inputs;
    const auto p = scratch("swapped.uemu");
    save_model(other, p);
    try {
        load_model(p, emulator_schema());
        FAIL("schema mismatch accepted");
    } catch (const ModelFileError& e) {
        CHECK(e.kind() == ModelFileError::Kind::schema);
    }
    CHECK_THROWS_AS(load_model(scratch("absent.uemu")), LoadError);
}

}
