// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0

#ifndef TICKETLAB_TRAINER_HPP
#define TICKETLAB_TRAINER_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "data.hpp"
#include "error.hpp"
#include "network.hpp"
#include "random.hpp"

namespace ticketlab {

/// SGD hyperparameters. Defaults are the openLTH VGG settings: lr 0.1,
/// momentum 0.1, weight decay 1e-4, lr x0.1 at the drop epochs.
struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 64;
    double lr = 0.1;
    double momentum = 0.1;
    double weight_decay = 1e-4;
    std::vector<std::size_t> lr_drop_epochs;  // lr is multiplied once these many epochs have completed
    double lr_drop_factor = 0.1;
    std::uint64_t seed = 0;  // data order only

    void validate() const {
        if (batch_size == 0) throw ConfigError("batch_size must be positive");
        if (!(lr > 0.0)) throw ConfigError("lr must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
        if (!(lr_drop_factor > 0.0)) throw ConfigError("lr_drop_factor must be positive");
        for (std::size_t i = 0; i < lr_drop_epochs.size(); ++i) {
            const std::size_t e = lr_drop_epochs[i];
            if (e < 1 || e > epochs) {
                throw ConfigError("lr drop epoch " + std::to_string(e) + " outside [1, " + std::to_string(epochs) + "]");
            }
            if (i > 0 && e <= lr_drop_epochs[i - 1]) throw ConfigError("lr_drop_epochs must be strictly increasing");
        }
    }

    /// Learning rate used during zero-based epoch `epoch`.
    double lr_at(std::size_t epoch) const {
        double rate = lr;
        for (std::size_t d : lr_drop_epochs) {
            if (d <= epoch) rate *= lr_drop_factor;
        }
        return rate;
    }
};

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;            // example-weighted mean training loss
    double train_accuracy = 0.0;  // on the batches as they were seen
    std::optional<double> eval_accuracy;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
};

/// One momentum-SGD update from the gradients held in the network:
///   v = momentum * v + (grad + weight_decay * w);  w -= lr * v
/// followed by zeroing w and v wherever the mask is 0. Every gradient is
/// checked before anything is written, so a failed step changes nothing.
inline void sgd_step(Network& net, const TrainConfig& cfg, double lr) {
    for (std::size_t l = 0; l < net.num_prunable_layers(); ++l) {
        for (const auto* g : {&net.weights(l).grad(), &net.bias(l).grad()}) {
            for (double v : *g) {
                if (!std::isfinite(v)) throw TrainingError("non-finite gradient", l);
            }
        }
    }
    for (std::size_t l = 0; l < net.num_prunable_layers(); ++l) {
        Tensor& w = net.weights(l);
        auto& vw = net.weight_velocity(l);
        auto mask = net.mask(l);
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!mask[i]) {
                w[i] = 0.0;
                vw[i] = 0.0;
                continue;
            }
            vw[i] = cfg.momentum * vw[i] + (w.grad()[i] + cfg.weight_decay * w[i]);
            w[i] -= lr * vw[i];
        }
        Tensor& b = net.bias(l);
        auto& vb = net.bias_velocity(l);
        for (std::size_t i = 0; i < b.size(); ++i) {
            vb[i] = cfg.momentum * vb[i] + (b.grad()[i] + cfg.weight_decay * b[i]);
            b[i] -= lr * vb[i];
        }
    }
}

/// Index of the largest logit in each row; ties go to the lowest index.
inline std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t N = logits.dim(0), C = logits.dim(1);
    std::vector<int> out(N);
    for (std::size_t n = 0; n < N; ++n) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c) {
            if (logits[n * C + c] > logits[n * C + best]) best = c;
        }
        out[n] = static_cast<int>(best);
    }
    return out;
}

/// Fraction of examples whose argmax logit equals the label. Records no
/// tape and does not modify the network.
inline double evaluate(const Network& net, const Dataset& data, std::size_t chunk = 500) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    const auto seq = batches(data, chunk);
    for (std::size_t b = 0; b < seq.size(); ++b) {
        Batch batch = seq[b];
        const auto predicted = argmax_rows(net.predict(batch.inputs));
        for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Shuffled minibatch SGD for cfg.epochs epochs. Epoch e visits the data in
/// the order permutation(N, mix_seed(cfg.seed, e)), so two networks trained
/// with the same config see identical batches.
inline TrainLog train(Network& net, const Dataset& data, const TrainConfig& cfg, const Dataset* eval = nullptr) {
    cfg.validate();
    TrainLog log;
    Tape tape;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr_at(epoch);
        const auto seq = batches(data, cfg.batch_size, mix_seed(cfg.seed, epoch));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < seq.size(); ++b) {
            Batch batch = seq[b];
            tape.clear();
            net.zero_grad();
            Tensor& logits = net.forward(tape, batch.inputs);
            Tensor& loss = tape.softmax_cross_entropy(logits, batch.labels);
            tape.backward(loss);
            loss_sum += loss[0] * static_cast<double>(batch.labels.size());
            const auto predicted = argmax_rows(logits);
            for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == batch.labels[i];
            sgd_step(net, cfg, lr);
        }
        tape.clear();
        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = lr;
        entry.loss = loss_sum / static_cast<double>(data.size());
        entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        if (eval) entry.eval_accuracy = evaluate(net, *eval);
        log.epochs.push_back(entry);
    }
    net.zero_grad();
    return log;
}

}  // namespace ticketlab

#endif  // TICKETLAB_TRAINER_HPP
