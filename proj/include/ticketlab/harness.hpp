// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// Experiment harness: JSON configs, the (strategy x seed) grid, and the CSV
// files behind accuracy-vs-sparsity curves, layerwise counts and ratios, and
// weight / gradient histograms.
//
// Output directory layout (all files have a single header row):
//   raw/<strategy>__seed<seed>.csv       one row per level of one cell
//   epochs/<strategy>__seed<seed>.csv    per-epoch training log of one cell
//   accuracy.csv                         strategy,remaining_fraction,mean_acc,std_acc
//   layerwise_counts.csv                 strategy,seed,level,remaining_fraction,layer,remaining
//   layerwise_ratio.csv                  gradient-sensitive / magnitude survivors per layer
//   histograms/<strategy>__seed<seed>__level<t>.csv
//   failures.csv                         only when a cell failed

#ifndef TICKETLAB_HARNESS_HPP
#define TICKETLAB_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "data.hpp"
#include "error.hpp"
#include "network.hpp"
#include "pruning.hpp"
#include "trainer.hpp"

namespace ticketlab {

namespace fs = std::filesystem;

/// Shortest decimal text that round-trips the double.
inline std::string format_double(double v) {
    char buf[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof buf, "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

// ---------------------------------------------------------------------------
// Configuration

struct DatasetSource {
    std::string kind = "synthetic";  // synthetic | idx | cifar10
    // idx
    std::string train_images, train_labels, test_images, test_labels;
    // cifar10
    std::vector<std::string> train_files, test_files;
    std::size_t train_limit = 0;  // 0 keeps everything
    std::size_t test_limit = 0;
    // synthetic
    std::size_t num_classes = 4;
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 50;
    std::size_t dims = 8;
    double spread = 0.3;
    std::uint64_t seed = 0;
    bool normalize = false;
};

struct ExperimentConfig {
    Architecture architecture;
    DatasetSource dataset;
    TrainConfig train;
    std::vector<StrategySpec> strategies;
    std::vector<std::uint64_t> seeds;
    fs::path output_dir = "results";
    std::size_t histogram_bins = 40;
    std::optional<std::size_t> histogram_layer;
    Reduction reduction = Reduction::sequential;
    std::size_t saliency_microbatch = 1;
    std::size_t workers = 1;
    bool keep_saliency = false;  // retain score maps and masks in the records (memory heavy)

    /// Structural checks that need no data. Throws ConfigError.
    void validate() const {
        const auto shapes = infer_shapes(architecture);
        std::size_t prunable = 0;
        for (const LayerSpec& l : architecture.layers) prunable += l.parameterized();
        if (prunable == 0) throw ConfigError("architecture has no dense or conv2d layer to prune");
        if (shapes.back().size() != 1) throw ConfigError("architecture must end in a flat logits vector");
        if (seeds.empty()) throw ConfigError("at least one seed is required");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
            throw ConfigError("seeds must be distinct");
        }
        if (strategies.empty()) throw ConfigError("at least one strategy is required");
        std::set<std::string> names;
        for (const StrategySpec& s : strategies) {
            if (s.name.empty() || !std::all_of(s.name.begin(), s.name.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
                })) {
                throw ConfigError("strategy name '" + s.name + "' must be nonempty and use only [A-Za-z0-9._-]");
            }
            if (!names.insert(s.name).second) throw ConfigError("duplicate strategy name '" + s.name + "'");
            s.validate();
        }
        train.validate();
        if (histogram_bins == 0) throw ConfigError("histogram_bins must be positive");
        if (histogram_layer && *histogram_layer >= prunable) {
            throw ConfigError("histogram_layer " + std::to_string(*histogram_layer) + " out of range (" +
                              std::to_string(prunable) + " prunable layers)");
        }
        if (saliency_microbatch == 0) throw ConfigError("saliency_microbatch must be positive");
        if (workers == 0) throw ConfigError("workers must be positive");
    }
};

/// The four strategies of the 2 x 2 grid with a shared schedule.
inline std::vector<StrategySpec> standard_strategies(std::size_t iterations, double fraction) {
    const auto targets = StrategySpec::geometric_targets(iterations, fraction);
    return {
        {"Train-w", Timing::training_based, Criterion::magnitude(), iterations, fraction, {}},
        {"Train-wg", Timing::training_based, Criterion::gradient_sensitive(), iterations, fraction, {}},
        {"Init-w", Timing::initialization_based, Criterion::magnitude(), iterations, fraction, targets},
        {"Init-wg", Timing::initialization_based, Criterion::gradient_sensitive(), iterations, fraction, targets},
    };
}

namespace detail {

using nlohmann::json;

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
}

inline std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return p;
    const fs::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

/// Parses the JSON experiment description. Relative paths are resolved
/// against `base_dir` (the config file's directory).
inline ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base_dir = ".") {
    using detail::get_or;
    ExperimentConfig cfg;
    try {
        const auto& arch = j.at("architecture");
        cfg.architecture.input = arch.at("input").get<Shape>();
        for (const auto& l : arch.at("layers")) {
            LayerSpec spec;
            spec.kind = parse_layer_kind(l.at("type").get<std::string>());
            if (spec.kind == LayerKind::dense) {
                spec.in = l.at("in").get<std::size_t>();
                spec.out = l.at("out").get<std::size_t>();
            } else if (spec.kind == LayerKind::conv2d) {
                spec.in = l.at("in").get<std::size_t>();
                spec.out = l.at("out").get<std::size_t>();
                spec.kernel = l.at("kernel").get<std::size_t>();
                spec.stride = get_or<std::size_t>(l, "stride", 1);
                spec.padding = get_or<std::size_t>(l, "padding", 0);
            }
            cfg.architecture.layers.push_back(spec);
        }

        const auto& ds = j.at("dataset");
        DatasetSource& src = cfg.dataset;
        src.kind = ds.at("kind").get<std::string>();
        src.train_limit = get_or<std::size_t>(ds, "train_limit", 0);
        src.test_limit = get_or<std::size_t>(ds, "test_limit", 0);
        if (src.kind == "idx") {
            src.train_images = detail::resolve(base_dir, ds.at("train_images").get<std::string>());
            src.train_labels = detail::resolve(base_dir, ds.at("train_labels").get<std::string>());
            src.test_images = detail::resolve(base_dir, ds.at("test_images").get<std::string>());
            src.test_labels = detail::resolve(base_dir, ds.at("test_labels").get<std::string>());
        } else if (src.kind == "cifar10") {
            for (const auto& p : ds.at("train")) src.train_files.push_back(detail::resolve(base_dir, p.get<std::string>()));
            for (const auto& p : ds.at("test")) src.test_files.push_back(detail::resolve(base_dir, p.get<std::string>()));
        } else if (src.kind == "synthetic") {
            src.num_classes = get_or<std::size_t>(ds, "num_classes", src.num_classes);
            src.train_per_class = get_or<std::size_t>(ds, "train_per_class", src.train_per_class);
            src.test_per_class = get_or<std::size_t>(ds, "test_per_class", src.test_per_class);
            src.dims = get_or<std::size_t>(ds, "dims", src.dims);
            src.spread = get_or<double>(ds, "spread", src.spread);
            src.seed = get_or<std::uint64_t>(ds, "seed", src.seed);
            src.normalize = get_or<bool>(ds, "normalize", false);
        } else {
            throw ConfigError("unknown dataset kind '" + src.kind + "' (expected idx, cifar10 or synthetic)");
        }

        const auto& tr = j.at("train");
        cfg.train.epochs = tr.at("epochs").get<std::size_t>();
        cfg.train.batch_size = get_or<std::size_t>(tr, "batch_size", cfg.train.batch_size);
        cfg.train.lr = get_or<double>(tr, "lr", cfg.train.lr);
        cfg.train.momentum = get_or<double>(tr, "momentum", cfg.train.momentum);
        cfg.train.weight_decay = get_or<double>(tr, "weight_decay", cfg.train.weight_decay);
        cfg.train.lr_drop_epochs = get_or<std::vector<std::size_t>>(tr, "lr_drop_epochs", {});
        cfg.train.lr_drop_factor = get_or<double>(tr, "lr_drop_factor", cfg.train.lr_drop_factor);
        cfg.train.seed = get_or<std::uint64_t>(tr, "data_seed", 0);

        for (const auto& s : j.at("strategies")) {
            StrategySpec spec;
            spec.name = s.at("name").get<std::string>();
            const auto timing = s.at("timing").get<std::string>();
            if (timing == "training_based") {
                spec.timing = Timing::training_based;
            } else if (timing == "initialization_based") {
                spec.timing = Timing::initialization_based;
            } else {
                throw ConfigError("strategy '" + spec.name + "': unknown timing '" + timing + "'");
            }
            const auto criterion = s.at("criterion").get<std::string>();
            if (criterion == "magnitude") {
                spec.criterion = Criterion::magnitude();
            } else if (criterion == "gradient_sensitive") {
                spec.criterion = Criterion::gradient_sensitive(get_or<double>(s, "lambda", 1.0));
            } else {
                throw ConfigError("strategy '" + spec.name + "': unknown criterion '" + criterion + "'");
            }
            spec.iterations = get_or<std::size_t>(s, "iterations", 1);
            spec.per_iteration_fraction = get_or<double>(s, "fraction", 0.5);
            if (s.contains("target_sparsities")) {
                spec.target_sparsities = s.at("target_sparsities").get<std::vector<double>>();
            } else if (spec.timing == Timing::initialization_based) {
                spec.target_sparsities = StrategySpec::geometric_targets(spec.iterations, spec.per_iteration_fraction);
            }
            cfg.strategies.push_back(spec);
        }

        cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        cfg.output_dir = detail::resolve(base_dir, get_or<std::string>(j, "output_dir", "results"));
        cfg.histogram_bins = get_or<std::size_t>(j, "histogram_bins", cfg.histogram_bins);
        if (j.contains("histogram_layer") && !j.at("histogram_layer").is_null()) {
            cfg.histogram_layer = j.at("histogram_layer").get<std::size_t>();
        }
        const auto reduction = get_or<std::string>(j, "reduction", "sequential");
        if (reduction == "sequential") {
            cfg.reduction = Reduction::sequential;
        } else if (reduction == "parallel") {
            cfg.reduction = Reduction::parallel;
        } else {
            throw ConfigError("reduction must be 'sequential' or 'parallel'");
        }
        cfg.saliency_microbatch = get_or<std::size_t>(j, "saliency_microbatch", 1);
        cfg.workers = get_or<std::size_t>(j, "workers", 1);
        cfg.keep_saliency = get_or<bool>(j, "keep_saliency", false);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

/// Loads train and test splits. Test data is standardized with the train
/// split's constants.
inline std::pair<Dataset, Dataset> load_datasets(const DatasetSource& src) {
    auto limit_idx = [](IdxArray a, std::size_t limit) {
        if (limit && limit < a.dims[0]) {
            const std::size_t per = a.data.size() / a.dims[0];
            a.dims[0] = limit;
            a.data.resize(limit * per);
        }
        return a;
    };
    Dataset train, test;
    if (src.kind == "idx") {
        train = dataset_from_idx(limit_idx(read_idx(src.train_images), src.train_limit),
                                 limit_idx(read_idx(src.train_labels), src.train_limit));
        test = dataset_from_idx(limit_idx(read_idx(src.test_images), src.test_limit),
                                limit_idx(read_idx(src.test_labels), src.test_limit), train.normalization);
    } else if (src.kind == "cifar10") {
        auto read_all = [](const std::vector<std::string>& files, std::size_t limit) {
            std::vector<std::uint8_t> bytes;
            for (const auto& f : files) {
                auto b = detail::read_file(f);
                bytes.insert(bytes.end(), b.begin(), b.end());
            }
            if (limit && limit * kCifarRecord < bytes.size()) bytes.resize(limit * kCifarRecord);
            return parse_cifar10(bytes);
        };
        if (src.train_files.empty() || src.test_files.empty()) throw ConfigError("cifar10 needs train and test files");
        train = read_all(src.train_files, src.train_limit);
        test = read_all(src.test_files, src.test_limit);
        const Normalization norm = compute_normalization(train);
        normalize(train, norm);
        normalize(test, norm);
    } else {
        const Dataset all = synthetic_clusters(src.num_classes, src.train_per_class + src.test_per_class, src.dims,
                                               src.spread, src.seed);
        std::tie(train, test) = split_rounds(all, src.train_per_class);
        if (src.normalize) {
            const Normalization norm = compute_normalization(train);
            normalize(train, norm);
            normalize(test, norm);
        }
    }
    train.split = "train";
    test.split = "test";
    const std::size_t classes = std::max(train.num_classes, test.num_classes);
    train.num_classes = test.num_classes = classes;
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Records

/// One level of one (strategy, seed) cell.
struct RunRecord {
    std::string strategy;
    Timing timing = Timing::training_based;
    CriterionKind criterion = CriterionKind::magnitude;
    std::uint64_t seed = 0;
    std::size_t level = 0;
    double target_sparsity = 0.0;
    double sparsity = 0.0;
    double remaining_fraction = 1.0;
    std::size_t surviving = 0;
    std::size_t total = 0;
    double test_accuracy = 0.0;
    std::vector<std::size_t> remaining_per_layer;
    std::optional<LayerSnapshot> snapshot;
    TrainLog train_log;
    std::optional<SaliencyMap> saliency;
    std::optional<Mask> pruned_mask;
};

inline std::vector<RunRecord> to_run_records(const StrategySpec& spec, std::uint64_t seed,
                                             const std::vector<IterationRecord>& iterations) {
    std::vector<RunRecord> out;
    for (const IterationRecord& it : iterations) {
        RunRecord r;
        r.strategy = spec.name;
        r.timing = spec.timing;
        r.criterion = spec.criterion.kind;
        r.seed = seed;
        r.level = it.level;
        r.target_sparsity = it.target_sparsity;
        r.sparsity = it.sparsity;
        r.remaining_fraction = it.remaining_fraction;
        r.surviving = it.surviving;
        r.total = it.total;
        r.test_accuracy = it.test_accuracy;
        r.remaining_per_layer = it.remaining_per_layer;
        r.snapshot = it.snapshot;
        r.train_log = it.train_log;
        r.saliency = it.saliency;
        r.pruned_mask = it.pruned_mask;
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Emitters

inline constexpr const char* kRawHeader =
    "strategy,seed,level,target_sparsity,sparsity,remaining_fraction,surviving,total,test_accuracy";

inline std::string emit_raw(const std::vector<RunRecord>& records) {
    std::ostringstream out;
    out << kRawHeader << '\n';
    for (const RunRecord& r : records) {
        out << r.strategy << ',' << r.seed << ',' << r.level << ',' << format_double(r.target_sparsity) << ','
            << format_double(r.sparsity) << ',' << format_double(r.remaining_fraction) << ',' << r.surviving << ','
            << r.total << ',' << format_double(r.test_accuracy) << '\n';
    }
    return out.str();
}

inline std::string emit_epochs(const std::vector<RunRecord>& records) {
    std::ostringstream out;
    out << "strategy,seed,level,epoch,lr,loss,train_accuracy,test_accuracy\n";
    for (const RunRecord& r : records) {
        for (const EpochLog& e : r.train_log.epochs) {
            out << r.strategy << ',' << r.seed << ',' << r.level << ',' << e.epoch << ',' << format_double(e.lr) << ','
                << format_double(e.loss) << ',' << format_double(e.train_accuracy) << ','
                << (e.eval_accuracy ? format_double(*e.eval_accuracy) : "") << '\n';
        }
    }
    return out.str();
}

/// Minimal view of a record for aggregation, also recoverable from raw CSVs.
struct AccuracyPoint {
    std::string strategy;
    double remaining_fraction;
    double accuracy;
};

struct AccuracyRow {
    std::string strategy;
    double remaining_fraction;
    double mean;
    double stddev;  // population standard deviation over seeds
    std::size_t runs;
};

/// Mean and population std of accuracy per (strategy, remaining fraction);
/// rows ordered by strategy name, then descending remaining fraction.
inline std::vector<AccuracyRow> aggregate_accuracy(const std::vector<AccuracyPoint>& points) {
    std::map<std::pair<std::string, double>, std::vector<double>, std::less<>> groups;
    for (const AccuracyPoint& p : points) groups[{p.strategy, -p.remaining_fraction}].push_back(p.accuracy);
    std::vector<AccuracyRow> rows;
    for (const auto& [key, values] : groups) {
        double sum = 0.0;
        for (double v : values) sum += v;
        const double mean = sum / static_cast<double>(values.size());
        double sq = 0.0;
        for (double v : values) sq += (v - mean) * (v - mean);
        rows.push_back({key.first, -key.second, mean, std::sqrt(sq / static_cast<double>(values.size())),
                        values.size()});
    }
    return rows;
}

inline std::string format_accuracy_csv(const std::vector<AccuracyRow>& rows) {
    std::ostringstream out;
    out << "strategy,remaining_fraction,mean_acc,std_acc\n";
    for (const AccuracyRow& r : rows) {
        out << r.strategy << ',' << format_double(r.remaining_fraction) << ',' << format_double(r.mean) << ','
            << format_double(r.stddev) << '\n';
    }
    return out.str();
}

inline std::string emit_accuracy_curve(const std::vector<RunRecord>& records) {
    if (records.empty()) throw InputError("emit_accuracy_curve needs at least one record");
    std::vector<AccuracyPoint> points;
    for (const RunRecord& r : records) points.push_back({r.strategy, r.remaining_fraction, r.test_accuracy});
    return format_accuracy_csv(aggregate_accuracy(points));
}

inline std::string emit_layerwise_counts(const std::vector<RunRecord>& records) {
    std::ostringstream out;
    out << "strategy,seed,level,remaining_fraction,layer,remaining\n";
    for (const RunRecord& r : records) {
        for (std::size_t l = 0; l < r.remaining_per_layer.size(); ++l) {
            out << r.strategy << ',' << r.seed << ',' << r.level << ',' << format_double(r.remaining_fraction) << ','
                << l << ',' << r.remaining_per_layer[l] << '\n';
        }
    }
    return out.str();
}

/// Per layer, survivors under gradient-sensitive pruning divided by
/// survivors under magnitude pruning, for every pair of strategies sharing a
/// timing. Counts are summed over the seeds both strategies ran. A zero
/// denominator is reported with ratio_defined = 0 and an empty ratio.
/// Levels present in only one strategy of a pair are skipped and listed in
/// `warnings`.
inline std::string emit_layerwise_ratio(const std::vector<RunRecord>& records,
                                        std::vector<std::string>* warnings = nullptr) {
    std::ostringstream out;
    out << "timing,numerator,denominator,remaining_fraction,layer,numerator_remaining,denominator_remaining,ratio,"
           "ratio_defined\n";
    std::vector<std::tuple<std::string, Timing, CriterionKind>> strategies;
    for (const RunRecord& r : records) {
        auto entry = std::make_tuple(r.strategy, r.timing, r.criterion);
        if (std::find(strategies.begin(), strategies.end(), entry) == strategies.end()) strategies.push_back(entry);
    }
    // (strategy, seed, remaining fraction) -> per-layer counts
    std::map<std::tuple<std::string, std::uint64_t, double>, const std::vector<std::size_t>*> index;
    std::map<std::string, std::set<double>> levels;
    std::map<std::string, std::set<std::uint64_t>> seeds;
    for (const RunRecord& r : records) {
        index[{r.strategy, r.seed, r.remaining_fraction}] = &r.remaining_per_layer;
        levels[r.strategy].insert(r.remaining_fraction);
        seeds[r.strategy].insert(r.seed);
    }
    for (const auto& [num, num_timing, num_kind] : strategies) {
        if (num_kind != CriterionKind::gradient_sensitive) continue;
        for (const auto& [den, den_timing, den_kind] : strategies) {
            if (den_kind != CriterionKind::magnitude || den_timing != num_timing) continue;
            std::vector<std::uint64_t> common;
            std::ranges::set_intersection(seeds[num], seeds[den], std::back_inserter(common));
            std::vector<double> shared, unmatched;
            std::ranges::set_intersection(levels[num], levels[den], std::back_inserter(shared));
            std::ranges::set_symmetric_difference(levels[num], levels[den], std::back_inserter(unmatched));
            if (warnings && !unmatched.empty()) {
                std::string msg = num + " vs " + den + ": unmatched remaining fractions";
                for (double u : unmatched) msg += " " + format_double(u);
                warnings->push_back(msg);
            }
            for (auto it = shared.rbegin(); it != shared.rend(); ++it) {
                const double level = *it;
                std::vector<std::size_t> n_sum, d_sum;
                for (std::uint64_t s : common) {
                    auto ni = index.find({num, s, level});
                    auto di = index.find({den, s, level});
                    if (ni == index.end() || di == index.end()) continue;
                    n_sum.resize(ni->second->size(), 0);
                    d_sum.resize(di->second->size(), 0);
                    for (std::size_t l = 0; l < n_sum.size(); ++l) n_sum[l] += (*ni->second)[l];
                    for (std::size_t l = 0; l < d_sum.size(); ++l) d_sum[l] += (*di->second)[l];
                }
                for (std::size_t l = 0; l < std::min(n_sum.size(), d_sum.size()); ++l) {
                    out << to_string(num_timing) << ',' << num << ',' << den << ',' << format_double(level) << ',' << l
                        << ',' << n_sum[l] << ',' << d_sum[l] << ',';
                    if (d_sum[l] == 0) {
                        out << ",0\n";
                    } else {
                        out << format_double(static_cast<double>(n_sum[l]) / static_cast<double>(d_sum[l])) << ",1\n";
                    }
                }
            }
        }
    }
    return out.str();
}

/// Equal-width bins over [min, max] of the values; the maximum lands in the
/// last bin. With a degenerate range everything falls into bin 0.
struct Histogram {
    double min = 0.0;
    double max = 0.0;
    std::vector<std::size_t> counts;

    double edge(std::size_t i) const {
        return min + (max - min) * static_cast<double>(i) / static_cast<double>(counts.size());
    }
    std::size_t mass() const {
        std::size_t m = 0;
        for (std::size_t c : counts) m += c;
        return m;
    }
};

inline Histogram make_histogram(const std::vector<double>& values, std::size_t bins) {
    if (bins == 0) throw ConfigError("histogram needs at least one bin");
    Histogram h;
    h.counts.assign(bins, 0);
    if (values.empty()) return h;
    auto [lo, hi] = std::ranges::minmax_element(values);
    h.min = *lo;
    h.max = *hi;
    const double width = h.max - h.min;
    for (double v : values) {
        std::size_t b = 0;
        if (width > 0.0) {
            b = static_cast<std::size_t>((v - h.min) / width * static_cast<double>(bins));
            b = std::min(b, bins - 1);
        }
        ++h.counts[b];
    }
    return h;
}

/// Histogram CSVs keyed by file name "<strategy>__seed<seed>__level<t>.csv",
/// each holding the weight, gradient and weight*gradient histograms of the
/// snapshot layer over its surviving weights.
inline std::map<std::string, std::string> emit_histograms(const std::vector<RunRecord>& records,
                                                          std::size_t layer_selector, std::size_t bins) {
    std::map<std::string, std::string> files;
    for (const RunRecord& r : records) {
        if (layer_selector >= r.remaining_per_layer.size()) {
            throw InputError("histogram layer " + std::to_string(layer_selector) + " out of range (" +
                             std::to_string(r.remaining_per_layer.size()) + " prunable layers)");
        }
        if (!r.snapshot) continue;
        if (r.snapshot->layer != layer_selector) {
            throw InputError("records carry snapshots of layer " + std::to_string(r.snapshot->layer) + ", not " +
                             std::to_string(layer_selector));
        }
        std::ostringstream out;
        out << "layer,quantity,range_min,range_max,bin,bin_lo,bin_hi,count\n";
        const std::pair<const char*, const std::vector<double>*> quantities[] = {
            {"weight", &r.snapshot->weights},
            {"gradient", &r.snapshot->gradients},
            {"weight_x_gradient", &r.snapshot->products}};
        for (const auto& [name, values] : quantities) {
            if (values->empty() && name != std::string("weight")) continue;
            const Histogram h = make_histogram(*values, bins);
            for (std::size_t b = 0; b < bins; ++b) {
                out << r.snapshot->layer << ',' << name << ',' << format_double(h.min) << ',' << format_double(h.max)
                    << ',' << b << ',' << format_double(h.edge(b)) << ',' << format_double(h.edge(b + 1)) << ','
                    << h.counts[b] << '\n';
            }
        }
        files[r.strategy + "__seed" + std::to_string(r.seed) + "__level" + std::to_string(r.level) + ".csv"] =
            out.str();
    }
    return files;
}

// ---------------------------------------------------------------------------
// Running

struct CellResult {
    std::string strategy;
    std::uint64_t seed = 0;
    std::vector<RunRecord> records;
    std::optional<std::string> error;
};

struct ExperimentResult {
    std::vector<CellResult> cells;
    std::vector<std::string> warnings;

    bool ok() const {
        return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return !c.error; });
    }
    std::vector<RunRecord> records() const {
        std::vector<RunRecord> all;
        for (const CellResult& c : cells) all.insert(all.end(), c.records.begin(), c.records.end());
        return all;
    }
};

/// Worker count: TICKETLAB_WORKERS when set, otherwise the config value.
inline std::size_t resolve_workers(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv("TICKETLAB_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return cfg.workers;
}

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out << text;
}

/// Copy of `data` with examples reshaped to the architecture input when the
/// element counts agree (e.g. N x 1 x 28 x 28 images into a 784-input MLP).
inline Dataset fit_to_input(const Dataset& data, const Architecture& arch) {
    Dataset out = data;
    if (out.example_shape() != arch.input) {
        if (out.example_size() != shape_size(arch.input)) {
            throw ConfigError("dataset examples of shape " + shape_string(out.example_shape()) +
                              " do not fit architecture input " + shape_string(arch.input));
        }
        out.reshape_examples(arch.input);
    }
    return out;
}

/// Runs one (strategy, seed) cell.
inline std::vector<RunRecord> run_cell(const ExperimentConfig& cfg, const StrategySpec& spec, std::uint64_t seed,
                                       const Dataset& train_data, const Dataset& test_data) {
    if (train_data.example_shape() != cfg.architecture.input || test_data.example_shape() != cfg.architecture.input) {
        return run_cell(cfg, spec, seed, fit_to_input(train_data, cfg.architecture),
                        fit_to_input(test_data, cfg.architecture));
    }
    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(cfg.train.seed, seed);
    RunOptions options;
    options.gradient.microbatch = cfg.saliency_microbatch;
    options.gradient.reduction = cfg.reduction;
    options.gradient.workers = cfg.reduction == Reduction::parallel ? resolve_workers(cfg) : 1;
    options.snapshot_layer = cfg.histogram_layer;
    options.keep_saliency = cfg.keep_saliency;
    const Network initial = Network::build(cfg.architecture, seed);
    return to_run_records(spec, seed, run_strategy(spec, initial, tc, train_data, test_data, options));
}

/// Executes every (strategy x seed) cell and writes the CSV artifacts.
/// The config is validated before any training; a failing cell is recorded
/// and the remaining cells still run. File contents depend only on the
/// config, never on worker count or completion order.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& train_data,
                                       const Dataset& test_data) {
    cfg.validate();
    train_data.validate();
    test_data.validate();
    const Shape out_shape = infer_shapes(cfg.architecture).back();
    if (out_shape[0] < train_data.num_classes) {
        throw ConfigError("architecture emits " + std::to_string(out_shape[0]) + " logits for " +
                          std::to_string(train_data.num_classes) + " classes");
    }
    const Dataset train_view = fit_to_input(train_data, cfg.architecture);
    const Dataset test_view = fit_to_input(test_data, cfg.architecture);

    ExperimentResult result;
    for (const StrategySpec& s : cfg.strategies) {
        for (std::uint64_t seed : cfg.seeds) result.cells.push_back({s.name, seed, {}, std::nullopt});
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < result.cells.size(); i = next++) {
            CellResult& cell = result.cells[i];
            const StrategySpec& spec = cfg.strategies[i / cfg.seeds.size()];
            try {
                cell.records = run_cell(cfg, spec, cell.seed, train_view, test_view);
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    };
    const std::size_t workers = std::min(resolve_workers(cfg), result.cells.size());
    if (workers <= 1 || cfg.reduction == Reduction::parallel) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    const fs::path& dir = cfg.output_dir;
    fs::create_directories(dir);
    std::string failures = "strategy,seed,error\n";
    for (const CellResult& cell : result.cells) {
        const std::string stem = cell.strategy + "__seed" + std::to_string(cell.seed) + ".csv";
        if (cell.error) {
            std::string msg = *cell.error;
            std::ranges::replace(msg, ',', ';');
            std::ranges::replace(msg, '\n', ' ');
            failures += cell.strategy + "," + std::to_string(cell.seed) + "," + msg + "\n";
            continue;
        }
        write_text(dir / "raw" / stem, emit_raw(cell.records));
        write_text(dir / "epochs" / stem, emit_epochs(cell.records));
    }
    const auto records = result.records();
    if (!records.empty()) {
        write_text(dir / "accuracy.csv", emit_accuracy_curve(records));
        write_text(dir / "layerwise_counts.csv", emit_layerwise_counts(records));
        write_text(dir / "layerwise_ratio.csv", emit_layerwise_ratio(records, &result.warnings));
        const std::size_t layer =
            cfg.histogram_layer.value_or(default_snapshot_layer(Network::build(cfg.architecture, cfg.seeds[0])));
        for (const auto& [name, text] : emit_histograms(records, layer, cfg.histogram_bins)) {
            write_text(dir / "histograms" / name, text);
        }
    }
    if (!result.ok()) write_text(dir / "failures.csv", failures);
    return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    auto [train_data, test_data] = load_datasets(cfg.dataset);
    return run_experiment(cfg, train_data, test_data);
}

// ---------------------------------------------------------------------------
// Re-aggregation from raw CSVs

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

/// Reads every raw/<cell>.csv under `dir`.
inline std::vector<AccuracyPoint> read_raw_points(const fs::path& dir) {
    const fs::path raw = dir / "raw";
    if (!fs::is_directory(raw)) throw InputError("no raw/ directory under '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(raw)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::ranges::sort(files);
    std::vector<AccuracyPoint> points;
    for (const fs::path& file : files) {
        std::ifstream in(file);
        std::string line;
        std::getline(in, line);
        if (line != kRawHeader) throw InputError("'" + file.string() + "' does not have the raw record header");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = split_csv_line(line);
            if (f.size() != 9) throw InputError("malformed row in '" + file.string() + "': " + line);
            points.push_back({f[0], std::strtod(f[5].c_str(), nullptr), std::strtod(f[8].c_str(), nullptr)});
        }
    }
    return points;
}

/// Recomputes accuracy.csv from the raw CSVs in `dir` and returns its text.
inline std::string aggregate_directory(const fs::path& dir) {
    const auto points = read_raw_points(dir);
    if (points.empty()) throw InputError("no raw records under '" + dir.string() + "'");
    const std::string text = format_accuracy_csv(aggregate_accuracy(points));
    write_text(dir / "accuracy.csv", text);
    return text;
}

}  // namespace ticketlab

#endif  // TICKETLAB_HARNESS_HPP
