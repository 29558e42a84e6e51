#pragma once

#include <chrono>
#include <cstdint>
#include <utility>
#include <vector>

#include "dib/dataset.hpp"
#include "dib/network.hpp"
#include "dib/rng.hpp"

namespace dib {

struct TrainConfig {
    int epochs = 1;
    Index batch_size = 32;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool deterministic = true;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("Adam step size must be > 0");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
            throw ConfigError("Adam beta1/beta2 must be in (0,1)");
        if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be > 0");
    }
};

struct TrainReport {
    std::vector<double> val_errors; // one entry per epoch, in [0,1]
    int best_epoch = 0;             // earliest argmin of val_errors
    double wall_time_s = 0.0;
};

// Per-parameter Adam accumulators.
template <typename Scalar>
struct AdamState {
    std::vector<LayerParams<Scalar>> m;
    std::vector<LayerParams<Scalar>> v;
    long step = 0;

    explicit AdamState(const Network<Scalar>& net) {
        m.resize(net.params.size());
        v.resize(net.params.size());
        for (std::size_t l = 0; l < net.params.size(); ++l) {
            if (!net.params[l].has_params()) continue;
            m[l].weights = Tensor<Scalar>(net.params[l].weights.shape);
            m[l].bias = Tensor<Scalar>(net.params[l].bias.shape);
            v[l].weights = Tensor<Scalar>(net.params[l].weights.shape);
            v[l].bias = Tensor<Scalar>(net.params[l].bias.shape);
        }
    }
};

namespace detail {

template <typename Scalar>
void adam_update_tensor(Tensor<Scalar>& theta, const Tensor<Scalar>& g, Tensor<Scalar>& m,
                        Tensor<Scalar>& v, const TrainConfig& cfg, long t) {
    const Scalar b1 = static_cast<Scalar>(cfg.beta1);
    const Scalar b2 = static_cast<Scalar>(cfg.beta2);
    const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
    const Scalar eps = static_cast<Scalar>(cfg.epsilon);
    m.data = b1 * m.data + (Scalar(1) - b1) * g.data;
    v.data = b2 * v.data + (Scalar(1) - b2) * g.data.square();
    const Scalar c1 = Scalar(1) / static_cast<Scalar>(1.0 - std::pow(cfg.beta1, double(t)));
    const Scalar c2 = Scalar(1) / static_cast<Scalar>(1.0 - std::pow(cfg.beta2, double(t)));
    theta.data -= lr * (m.data * c1) / ((v.data * c2).sqrt() + eps);
}

} // namespace detail

template <typename Scalar>
void adam_step(Network<Scalar>& net, const std::vector<LayerParams<Scalar>>& grads,
               AdamState<Scalar>& state, const TrainConfig& cfg) {
    ++state.step;
    for (std::size_t l = 0; l < net.params.size(); ++l) {
        if (!net.params[l].has_params()) continue;
        detail::adam_update_tensor(net.params[l].weights, grads[l].weights, state.m[l].weights,
                                   state.v[l].weights, cfg, state.step);
        detail::adam_update_tensor(net.params[l].bias, grads[l].bias, state.m[l].bias,
                                   state.v[l].bias, cfg, state.step);
    }
}

// Argmax predictions over a dataset, evaluated in fixed-size chunks.
template <typename Scalar>
std::vector<int> predict_labels(const Network<Scalar>& net, const Dataset<Scalar>& data,
                                Index chunk = 256) {
    std::vector<int> pred(static_cast<std::size_t>(data.size()));
    const auto m = data.matrix();
    for (Index start = 0; start < data.size(); start += chunk) {
        const Index len = std::min(chunk, data.size() - start);
        MatrixR<Scalar> p = forward(net, MatrixR<Scalar>(m.middleRows(start, len)));
        for (Index i = 0; i < len; ++i)
            pred[static_cast<std::size_t>(start + i)] = static_cast<int>(argmax_lowest(p.row(i)));
    }
    return pred;
}

template <typename Scalar>
double misclassification_rate(const Network<Scalar>& net, const Dataset<Scalar>& data) {
    if (data.size() == 0) throw ValueError("misclassification_rate: empty dataset");
    const auto pred = predict_labels(net, data);
    Index wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] != data.labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

// Minibatch Adam training with hold-out model selection: the returned
// network carries the parameter snapshot from the epoch with the lowest
// validation error (earliest epoch on ties), not the final-epoch state.
template <typename Scalar>
std::pair<Network<Scalar>, TrainReport> train(const Network<Scalar>& start,
                                              const Dataset<Scalar>& train_set,
                                              const Dataset<Scalar>& valid_set,
                                              const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.size() == 0 || valid_set.size() == 0)
        throw ValueError("train: empty dataset");
    train_set.validate();
    valid_set.validate();
    if (train_set.classes != static_cast<int>(start.classes()) ||
        valid_set.classes != static_cast<int>(start.classes()))
        throw ShapeError("train: dataset class count does not match network output width");

    const auto t0 = std::chrono::steady_clock::now();

    Network<Scalar> net = start;
    AdamState<Scalar> adam(net);
    Rng rng(derive_seed(cfg.seed, RngStream::Train));
    TrainReport report;

    const Index n = train_set.size();
    const Index f = train_set.example_size();
    const auto data = train_set.matrix();
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    std::vector<LayerParams<Scalar>> best_params = net.params;
    double best_err = std::numeric_limits<double>::infinity();

    MatrixR<Scalar> batch;
    std::vector<int> batch_labels;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (Index start_row = 0; start_row < n; start_row += cfg.batch_size) {
            const Index len = std::min<Index>(cfg.batch_size, n - start_row);
            batch.resize(len, f);
            batch_labels.resize(static_cast<std::size_t>(len));
            for (Index i = 0; i < len; ++i) {
                const Index r = order[static_cast<std::size_t>(start_row + i)];
                batch.row(i) = data.row(r);
                batch_labels[static_cast<std::size_t>(i)] = train_set.labels[static_cast<std::size_t>(r)];
            }
            auto g = grad(net, batch, batch_labels, rng);
            adam_step(net, g.grads, adam, cfg);
        }
        const double err = misclassification_rate(net, valid_set);
        report.val_errors.push_back(err);
        if (err < best_err) {
            best_err = err;
            best_params = net.params;
            report.best_epoch = epoch;
        }
    }

    net.params = std::move(best_params);
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(net), std::move(report)};
}

} // namespace dib
