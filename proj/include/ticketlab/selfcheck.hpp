// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// Quick self-tests behind `ticketlab check`: finite-difference gradient
// checks of every primitive and of a small conv+dense model, the
// per-example saliency oracle, and the full-sort ranking oracle.

#ifndef TICKETLAB_SELFCHECK_HPP
#define TICKETLAB_SELFCHECK_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "data.hpp"
#include "network.hpp"
#include "pruning.hpp"
#include "random.hpp"

namespace ticketlab {

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;      // measured error or mismatch count
    double tolerance = 0.0;  // passes when value < tolerance (or == 0 for counts)
};

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape), true);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Values bounded away from zero so ReLU kinks stay outside +-eps.
inline Tensor random_tensor_away_from_zero(Shape shape, Rng& rng) {
    Tensor t(std::move(shape), true);
    for (double& v : t.values()) {
        const double mag = rng.uniform(0.1, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

/// A conv -> relu -> pool -> flatten -> dense net with a few thousand weights.
inline Architecture small_conv_architecture() {
    return {{2, 6, 6},
            {LayerSpec::conv2d(2, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2x2(), LayerSpec::flatten(),
             LayerSpec::dense(36, 16), LayerSpec::relu(), LayerSpec::dense(16, 3)}};
}

/// Largest finite-difference error over every parameter tensor of `net`
/// for the mean cross-entropy on (inputs, labels).
inline double model_gradient_error(Network& net, Tensor& inputs, const std::vector<int>& labels, double eps) {
    double worst = 0.0;
    auto loss = [&](Tape& tape, Tensor&) -> Tensor& {
        return tape.softmax_cross_entropy(net.forward(tape, inputs), labels);
    };
    for (std::size_t l = 0; l < net.num_prunable_layers(); ++l) {
        worst = std::max(worst, finite_diff_check(loss, net.weights(l), eps));
        worst = std::max(worst, finite_diff_check(loss, net.bias(l), eps));
    }
    return worst;
}

/// Brute-force g: one example at a time with a freshly built tape.
inline std::vector<double> per_example_abs_gradient_oracle(const Network& source, const Dataset& data) {
    Network net = source;
    std::vector<double> total(net.total_prunable(), 0.0);
    const std::size_t stride = data.example_size();
    for (std::size_t j = 0; j < data.size(); ++j) {
        Shape shape = data.examples.shape();
        shape[0] = 1;
        Tensor x(shape, std::vector<double>(data.examples.values().begin() + static_cast<std::ptrdiff_t>(j * stride),
                                            data.examples.values().begin() + static_cast<std::ptrdiff_t>((j + 1) * stride)));
        const std::vector<int> label{data.labels[j]};
        net.zero_grad();
        Tape tape;
        tape.backward(tape.softmax_cross_entropy(net.forward(tape, x), label));
        std::size_t k = 0;
        for (std::size_t l = 0; l < net.num_prunable_layers(); ++l) {
            auto mask = net.mask(l);
            for (std::size_t i = 0; i < net.weights(l).size(); ++i, ++k) {
                if (mask[i]) total[k] += std::abs(net.weights(l).grad()[i]);
            }
        }
    }
    for (double& v : total) v /= static_cast<double>(data.size());
    return total;
}

/// Brute-force mask selection: stable-sort all surviving indices by score.
inline Mask full_sort_mask_oracle(const Mask& current, const std::vector<double>& scores, double fraction) {
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < current.size(); ++i) {
        if (current[i]) alive.push_back(i);
    }
    std::stable_sort(alive.begin(), alive.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(alive.size())));
    Mask out = current;
    for (std::size_t r = 0; r < k; ++r) out[alive[r]] = 0;
    return out;
}

inline std::vector<CheckResult> run_self_checks() {
    constexpr double eps = 1e-4;
    constexpr double tol = 1e-4;
    std::vector<CheckResult> results;
    auto add = [&](std::string name, double value, double tolerance) {
        results.push_back({std::move(name), value < tolerance, value, tolerance});
    };
    Rng rng(20240601);

    {
        Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
        auto f = [&](Tape& t, Tensor&) -> Tensor& { return t.sum(t.mul(t.matmul(a, b), t.matmul(a, b))); };
        add("matmul gradient (lhs)", finite_diff_check(f, a, eps), tol);
        add("matmul gradient (rhs)", finite_diff_check(f, b, eps), tol);
    }
    {
        Tensor x = random_tensor({2, 2, 5, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng);
        Tensor probe = random_tensor({2, 3, 5, 5}, rng);
        probe.set_requires_grad(false);
        auto f = [&](Tape& t, Tensor&) -> Tensor& { return t.sum(t.mul(t.conv2d(x, k, 1, 1), probe)); };
        add("conv2d gradient (input)", finite_diff_check(f, x, eps), tol);
        add("conv2d gradient (kernel)", finite_diff_check(f, k, eps), tol);
    }
    {
        Tensor x = random_tensor_away_from_zero({4, 5}, rng);
        Tensor probe = random_tensor({4, 5}, rng);
        probe.set_requires_grad(false);
        auto f = [&](Tape& t, Tensor& in) -> Tensor& { return t.sum(t.mul(t.relu(in), probe)); };
        add("relu gradient", finite_diff_check(f, x, eps), tol);
    }
    {
        Tensor x = random_tensor({2, 3, 4, 4}, rng);
        Tensor probe = random_tensor({2, 3, 2, 2}, rng);
        probe.set_requires_grad(false);
        auto f = [&](Tape& t, Tensor& in) -> Tensor& { return t.sum(t.mul(t.maxpool2x2(in), probe)); };
        add("maxpool2x2 gradient", finite_diff_check(f, x, eps), tol);
    }
    {
        Tensor logits = random_tensor({4, 3}, rng, -2.0, 2.0);
        const std::vector<int> labels{0, 2, 1, 2};
        auto f = [&](Tape& t, Tensor& in) -> Tensor& { return t.softmax_cross_entropy(in, labels); };
        add("softmax cross-entropy gradient", finite_diff_check(f, logits, eps), tol);
    }
    {
        Network net = Network::build(small_conv_architecture(), 7);
        Tensor inputs = random_tensor({2, 2, 6, 6}, rng);
        inputs.set_requires_grad(false);
        add("conv+dense model gradient", model_gradient_error(net, inputs, {1, 2}, eps), tol);
    }
    {
        const Dataset data = synthetic_clusters(3, 7, 5, 0.5, 11).subset(std::vector<std::size_t>{
            0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19});
        const Architecture arch{{5}, {LayerSpec::dense(5, 8), LayerSpec::relu(), LayerSpec::dense(8, 3)}};
        const Network net = Network::build(arch, 3);
        const auto fast = average_abs_gradient(net, data);
        const auto slow = per_example_abs_gradient_oracle(net, data);
        double worst = 0.0;
        for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
        add("average |gradient| vs per-example oracle", worst, 1e-12);
    }
    {
        double mismatches = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            Mask current({120, 80, 40});
            SaliencyMap scores;
            for (std::size_t i = 0; i < current.size(); ++i) {
                if (rng.uniform() < 0.2) current[i] = 0;
                scores.scores.push_back(static_cast<double>(rng.below(25)));  // many ties
            }
            for (double fraction : {0.1, 0.5, 0.9}) {
                if (select_mask(current, scores, fraction) != full_sort_mask_oracle(current, scores.scores, fraction)) {
                    mismatches += 1.0;
                }
            }
        }
        add("select_mask vs full-sort oracle (mismatches)", mismatches, 0.5);
    }
    return results;
}

}  // namespace ticketlab

#endif  // TICKETLAB_SELFCHECK_HPP
