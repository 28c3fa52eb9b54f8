// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// Saliency scores, global bottom-k mask selection and the four pruning
// strategies obtained by crossing when pruning happens (after training, with
// rewinding, or once at initialization) with how weights are ranked (|w| or
// |w| * g^lambda, g being the mean absolute per-example loss gradient).

#ifndef TICKETLAB_PRUNING_HPP
#define TICKETLAB_PRUNING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "autodiff.hpp"
#include "data.hpp"
#include "error.hpp"
#include "network.hpp"
#include "trainer.hpp"

namespace ticketlab {

enum class CriterionKind { magnitude, gradient_sensitive };
enum class Timing { training_based, initialization_based };

inline std::string to_string(CriterionKind k) {
    return k == CriterionKind::magnitude ? "magnitude" : "gradient_sensitive";
}
inline std::string to_string(Timing t) {
    return t == Timing::training_based ? "training_based" : "initialization_based";
}

struct Criterion {
    CriterionKind kind = CriterionKind::magnitude;
    double lambda = 1.0;  // exponent on g; ignored for magnitude

    static Criterion magnitude() { return {CriterionKind::magnitude, 1.0}; }
    static Criterion gradient_sensitive(double lambda = 1.0) { return {CriterionKind::gradient_sensitive, lambda}; }

    bool needs_data() const { return kind == CriterionKind::gradient_sensitive; }
};

/// One of Train-w, Train-wg, Init-w, Init-wg (or a lambda variant).
/// Training-based runs read `iterations` and `per_iteration_fraction`;
/// initialization-based runs read `target_sparsities`.
struct StrategySpec {
    std::string name;
    Timing timing = Timing::training_based;
    Criterion criterion;
    std::size_t iterations = 1;
    double per_iteration_fraction = 0.5;
    std::vector<double> target_sparsities;

    void validate() const {
        if (criterion.kind == CriterionKind::gradient_sensitive && !std::isfinite(criterion.lambda)) {
            throw ConfigError("strategy '" + name + "': lambda must be finite");
        }
        if (timing == Timing::training_based) {
            if (iterations == 0) throw ConfigError("strategy '" + name + "': iterations must be positive");
            if (!(per_iteration_fraction >= 0.0 && per_iteration_fraction < 1.0)) {
                throw ConfigError("strategy '" + name + "': per-iteration fraction must lie in [0, 1)");
            }
        } else {
            if (target_sparsities.empty()) throw ConfigError("strategy '" + name + "': no target sparsities");
            for (double s : target_sparsities) {
                if (!(s >= 0.0 && s < 1.0)) throw ConfigError("strategy '" + name + "': target sparsity outside [0, 1)");
            }
        }
    }

    /// Targets 1 - (1 - f)^t for t = 1..iterations: the sparsities an
    /// iterative schedule passes through.
    static std::vector<double> geometric_targets(std::size_t iterations, double fraction) {
        std::vector<double> out;
        double remaining = 1.0;
        for (std::size_t t = 0; t < iterations; ++t) {
            remaining *= 1.0 - fraction;
            out.push_back(1.0 - remaining);
        }
        return out;
    }
};

/// Score of every prunable weight in enumeration order. Surviving weights
/// carry finite nonnegative scores; pruned weights carry kPrunedScore and
/// never take part in ranking.
struct SaliencyMap {
    static constexpr double kPrunedScore = -std::numeric_limits<double>::infinity();
    std::vector<double> scores;

    std::size_t size() const noexcept { return scores.size(); }
};

enum class Reduction { sequential, parallel };

struct GradientOptions {
    std::size_t microbatch = 1;
    Reduction reduction = Reduction::sequential;
    std::size_t workers = 1;  // parallel reduction only
};

namespace detail {

// Sum over [first, last) of microbatch-size * |mean gradient of the microbatch|.
inline std::vector<double> abs_gradient_sum(Network net, const Dataset& data, std::size_t first, std::size_t last,
                                            std::size_t microbatch) {
    std::vector<double> acc(net.total_prunable(), 0.0);
    std::vector<std::size_t> order(last - first);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = first + i;
    const Dataset part = data.subset(order);
    const auto seq = batches(part, microbatch);
    Tape tape;
    for (std::size_t b = 0; b < seq.size(); ++b) {
        Batch batch = seq[b];
        tape.clear();
        net.zero_grad();
        Tensor& loss = tape.softmax_cross_entropy(net.forward(tape, batch.inputs), batch.labels);
        tape.backward(loss);
        const double weight = static_cast<double>(batch.labels.size());
        std::size_t k = 0;
        for (std::size_t l = 0; l < net.num_prunable_layers(); ++l) {
            for (double g : net.weights(l).grad()) acc[k++] += weight * std::abs(g);
        }
    }
    return acc;
}

}  // namespace detail

/// g_i = (1/n) sum_j |dL(x_j)/dw_i| over the whole dataset, in prunable
/// enumeration order. With microbatch m > 1 the absolute value is taken of
/// each microbatch's mean gradient instead (a speed approximation; m = 1 is
/// exact). Pruned weights report 0. The network is not modified.
inline std::vector<double> average_abs_gradient(const Network& net, const Dataset& data,
                                                const GradientOptions& options = {}) {
    if (data.empty()) throw InputError("average_abs_gradient needs a nonempty dataset");
    if (options.microbatch == 0) throw ConfigError("microbatch must be at least 1");
    const std::size_t n = data.size();
    std::vector<double> g;
    if (options.reduction == Reduction::parallel && options.workers > 1 && n > 1) {
        const std::size_t workers = std::min(options.workers, n);
        std::vector<std::vector<double>> partial(workers);
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t first = n * w / workers, last = n * (w + 1) / workers;
            threads.emplace_back([&, w, first, last] {
                partial[w] = detail::abs_gradient_sum(net, data, first, last, options.microbatch);
            });
        }
        for (auto& t : threads) t.join();
        g = std::move(partial[0]);
        for (std::size_t w = 1; w < workers; ++w) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += partial[w][i];
        }
    } else {
        g = detail::abs_gradient_sum(net, data, 0, n, options.microbatch);
    }
    const Mask mask = net.mask();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] ? g[i] / static_cast<double>(n) : 0.0;
    return g;
}

/// Scores from precomputed gradients: |w| for magnitude, |w| * g^lambda for
/// gradient-sensitive, with 0^0 taken as 1.
inline SaliencyMap saliency_from_gradients(const Network& net, const Criterion& criterion,
                                           const std::vector<double>* gradients) {
    SaliencyMap map;
    map.scores.reserve(net.total_prunable());
    if (criterion.needs_data() && (!gradients || gradients->size() != net.total_prunable())) {
        throw UsageError("gradient-sensitive saliency needs one gradient per prunable weight");
    }
    std::size_t k = 0;
    for (std::size_t l = 0; l < net.num_prunable_layers(); ++l) {
        const Tensor& w = net.weights(l);
        auto mask = net.mask(l);
        for (std::size_t i = 0; i < w.size(); ++i, ++k) {
            if (!mask[i]) {
                map.scores.push_back(SaliencyMap::kPrunedScore);
                continue;
            }
            double score = std::abs(w[i]);
            if (criterion.needs_data()) {
                const double g = (*gradients)[k];
                score *= criterion.lambda == 0.0 ? 1.0 : std::pow(g, criterion.lambda);
            }
            map.scores.push_back(score);
        }
    }
    return map;
}

inline SaliencyMap compute_saliency(const Network& net, const Criterion& criterion, const Dataset* data,
                                    const GradientOptions& options = {}) {
    if (!criterion.needs_data()) return saliency_from_gradients(net, criterion, nullptr);
    if (!data) throw UsageError("gradient-sensitive saliency needs a dataset");
    const auto g = average_abs_gradient(net, *data, options);
    return saliency_from_gradients(net, criterion, &g);
}

/// Number of weights select_mask removes from `surviving` at `fraction`.
inline std::size_t prune_count(std::size_t surviving, double fraction) {
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(surviving)));
}

/// Removes the k = floor(fraction * surviving) lowest-scoring surviving
/// weights, ranked globally across layers. Equal scores are broken by
/// enumeration order, earlier index first. The result is a subset of
/// `current`.
inline Mask select_mask(const Mask& current, const SaliencyMap& scores, double fraction) {
    if (scores.size() != current.size()) {
        throw InputError("saliency map has " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(current.size()) + " weights");
    }
    if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("pruning fraction must lie in [0, 1)");
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < current.size(); ++i) {
        if (!current[i]) continue;
        const double s = scores.scores[i];
        if (!(s >= 0.0) || !std::isfinite(s)) {
            throw InputError("surviving weight " + std::to_string(i) + " has invalid score " + std::to_string(s));
        }
        alive.push_back(i);
    }
    const std::size_t k = prune_count(alive.size(), fraction);
    if (k >= alive.size()) throw ConfigError("pruning would remove every surviving weight");
    Mask next = current;
    if (k == 0) return next;
    auto lower = [&](std::size_t a, std::size_t b) {
        const double sa = scores.scores[a], sb = scores.scores[b];
        return sa < sb || (sa == sb && a < b);
    };
    std::nth_element(alive.begin(), alive.begin() + static_cast<std::ptrdiff_t>(k - 1), alive.end(), lower);
    const std::size_t pivot = alive[k - 1];
    for (std::size_t i : alive) {
        if (!lower(pivot, i)) next[i] = 0;
    }
    return next;
}

/// Surviving weights of one layer together with their gradients and
/// weight * gradient products.
struct LayerSnapshot {
    std::size_t layer = 0;
    std::vector<double> weights;
    std::vector<double> gradients;
    std::vector<double> products;
};

struct IterationRecord {
    std::size_t level = 0;  // iteration (training-based) or target index (initialization-based)
    double target_sparsity = 0.0;
    double sparsity = 0.0;
    double remaining_fraction = 1.0;
    std::size_t surviving = 0;
    std::size_t total = 0;
    double test_accuracy = 0.0;
    std::vector<std::size_t> remaining_per_layer;
    TrainLog train_log;
    std::optional<LayerSnapshot> snapshot;
    std::optional<SaliencyMap> saliency;  // scores used for the pruning decision of this level
    std::optional<Mask> pruned_mask;      // training-based: mask chosen after this level
};

struct RunOptions {
    GradientOptions gradient;
    std::optional<std::size_t> snapshot_layer;  // default: last layer before the classifier
    bool snapshot_gradients = true;             // compute g for histograms even under magnitude
    bool keep_saliency = true;
    bool per_epoch_eval = true;
};

/// Prunable layer shown in histograms when none is chosen: the last one
/// before the classifier head.
inline std::size_t default_snapshot_layer(const Network& net) {
    return net.num_prunable_layers() >= 2 ? net.num_prunable_layers() - 2 : 0;
}

namespace detail {

inline LayerSnapshot take_snapshot(const Network& net, std::size_t layer, const std::vector<double>* gradients) {
    if (layer >= net.num_prunable_layers()) {
        throw InputError("snapshot layer " + std::to_string(layer) + " out of range (network has " +
                         std::to_string(net.num_prunable_layers()) + " prunable layers)");
    }
    LayerSnapshot snap;
    snap.layer = layer;
    const std::size_t offset = net.mask().layer_offset(layer);
    const Tensor& w = net.weights(layer);
    auto mask = net.mask(layer);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!mask[i]) continue;
        snap.weights.push_back(w[i]);
        if (gradients) {
            const double g = (*gradients)[offset + i];
            snap.gradients.push_back(g);
            snap.products.push_back(w[i] * g);
        }
    }
    return snap;
}

inline void fill_counts(IterationRecord& rec, const Network& net) {
    rec.total = net.total_prunable();
    rec.remaining_per_layer = net.remaining_per_layer();
    rec.surviving = 0;
    for (std::size_t c : rec.remaining_per_layer) rec.surviving += c;
    rec.sparsity = 1.0 - static_cast<double>(rec.surviving) / static_cast<double>(rec.total);
    rec.remaining_fraction = 1.0 - rec.sparsity;
}

}  // namespace detail

/// Iterative train / prune / rewind starting from `net` as initialized.
/// Produces iterations + 1 records: level t is the network trained with
/// t pruning rounds applied, and its snapshot and saliency describe the
/// trained weights just before round t + 1 prunes them.
inline std::vector<IterationRecord> run_training_based(const StrategySpec& spec, Network net, const TrainConfig& cfg,
                                                       const Dataset& train_data, const Dataset& test_data,
                                                       const RunOptions& options = {}) {
    if (spec.timing != Timing::training_based) throw UsageError("run_training_based needs a training-based strategy");
    spec.validate();
    cfg.validate();
    const std::size_t snap_layer = options.snapshot_layer.value_or(default_snapshot_layer(net));
    std::vector<IterationRecord> records;
    double remaining_target = 1.0;
    for (std::size_t t = 0; t <= spec.iterations; ++t) {
        IterationRecord rec;
        rec.level = t;
        rec.target_sparsity = 1.0 - remaining_target;
        rec.train_log = train(net, train_data, cfg, options.per_epoch_eval ? &test_data : nullptr);
        rec.test_accuracy = evaluate(net, test_data);
        detail::fill_counts(rec, net);

        const bool prune = t < spec.iterations;
        std::optional<std::vector<double>> g;
        if ((prune && spec.criterion.needs_data()) || options.snapshot_gradients) {
            g = average_abs_gradient(net, train_data, options.gradient);
        }
        rec.snapshot = detail::take_snapshot(net, snap_layer, g ? &*g : nullptr);
        if (prune) {
            SaliencyMap scores = saliency_from_gradients(net, spec.criterion, g ? &*g : nullptr);
            Mask next = select_mask(net.mask(), scores, spec.per_iteration_fraction);
            net.apply_mask(next);
            net.rewind();
            if (options.keep_saliency) {
                rec.saliency = std::move(scores);
                rec.pruned_mask = std::move(next);
            }
            remaining_target *= 1.0 - spec.per_iteration_fraction;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<IterationRecord> run_training_based(const StrategySpec& spec, const Architecture& arch,
                                                       const TrainConfig& cfg, const Dataset& train_data,
                                                       const Dataset& test_data, std::uint64_t seed,
                                                       const RunOptions& options = {}) {
    return run_training_based(spec, Network::build(arch, seed), cfg, train_data, test_data, options);
}

/// One-shot pruning of the untrained network to each target sparsity, then
/// full training. Every target starts from the same initial draw.
inline std::vector<IterationRecord> run_init_based(const StrategySpec& spec, const Network& initial,
                                                   const TrainConfig& cfg, const Dataset& train_data,
                                                   const Dataset& test_data, const RunOptions& options = {}) {
    if (spec.timing != Timing::initialization_based) {
        throw UsageError("run_init_based needs an initialization-based strategy");
    }
    spec.validate();
    cfg.validate();
    const std::size_t snap_layer = options.snapshot_layer.value_or(default_snapshot_layer(initial));
    std::optional<std::vector<double>> g;
    if (spec.criterion.needs_data() || options.snapshot_gradients) {
        g = average_abs_gradient(initial, train_data, options.gradient);
    }
    const SaliencyMap scores = saliency_from_gradients(initial, spec.criterion, g ? &*g : nullptr);
    const LayerSnapshot snapshot = detail::take_snapshot(initial, snap_layer, g ? &*g : nullptr);
    const Mask all = initial.mask();

    std::vector<IterationRecord> records;
    for (std::size_t i = 0; i < spec.target_sparsities.size(); ++i) {
        Network net = initial;
        IterationRecord rec;
        rec.level = i;
        rec.target_sparsity = spec.target_sparsities[i];
        rec.snapshot = snapshot;
        Mask mask = select_mask(all, scores, spec.target_sparsities[i]);
        net.apply_mask(mask);
        if (options.keep_saliency) {
            rec.saliency = scores;
            rec.pruned_mask = mask;
        }
        rec.train_log = train(net, train_data, cfg, options.per_epoch_eval ? &test_data : nullptr);
        rec.test_accuracy = evaluate(net, test_data);
        detail::fill_counts(rec, net);
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<IterationRecord> run_init_based(const StrategySpec& spec, const Architecture& arch,
                                                   const TrainConfig& cfg, const Dataset& train_data,
                                                   const Dataset& test_data, std::uint64_t seed,
                                                   const RunOptions& options = {}) {
    return run_init_based(spec, Network::build(arch, seed), cfg, train_data, test_data, options);
}

/// Dispatches on spec.timing.
inline std::vector<IterationRecord> run_strategy(const StrategySpec& spec, const Network& initial,
                                                 const TrainConfig& cfg, const Dataset& train_data,
                                                 const Dataset& test_data, const RunOptions& options = {}) {
    return spec.timing == Timing::training_based
               ? run_training_based(spec, initial, cfg, train_data, test_data, options)
               : run_init_based(spec, initial, cfg, train_data, test_data, options);
}

}  // namespace ticketlab

#endif  // TICKETLAB_PRUNING_HPP
