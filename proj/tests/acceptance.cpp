// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// line fails.
//
//   acceptance [work_dir]
//
// The desk-scale experiment uses MNIST when TICKETLAB_MNIST_DIR points at a
// directory holding the four standard IDX files, and otherwise generates a
// procedural ten-class 28x28 glyph set of the same shape.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "support/synthetic_digits.hpp"
#include "ticketlab/harness.hpp"
#include "ticketlab/selfcheck.hpp"

using namespace ticketlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fmt(const char* format, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, format, a);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Architecture mlp(std::size_t in, std::size_t hidden, std::size_t out) {
    return {{in}, {LayerSpec::dense(in, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, out)}};
}

// ---------------------------------------------------------------------------
// 1. gradients

Outcome gradient_correctness() {
    const auto start = std::chrono::steady_clock::now();
    constexpr double eps = 1e-4;
    double worst = 0.0;
    std::string worst_name;
    auto note = [&](const std::string& name, double err) {
        if (err >= worst) {
            worst = err;
            worst_name = name;
        }
    };
    for (const CheckResult& r : run_self_checks()) {
        if (r.tolerance == 1e-4) note(r.name, r.value);  // the finite-difference checks
    }
    Rng rng(77);
    {
        Tensor x = random_tensor({3, 4}, rng), b = random_tensor({4}, rng), probe = random_tensor({3, 4}, rng);
        probe.set_requires_grad(false);
        auto f = [&](Tape& t, Tensor&) -> Tensor& { return t.sum(t.mul(t.add_bias(x, b), probe)); };
        note("add_bias (input)", finite_diff_check(f, x, eps));
        note("add_bias (bias)", finite_diff_check(f, b, eps));
    }
    {
        Tensor x = random_tensor({2, 3, 2, 2}, rng), b = random_tensor({3}, rng), probe = random_tensor({2, 3, 2, 2}, rng);
        probe.set_requires_grad(false);
        auto f = [&](Tape& t, Tensor&) -> Tensor& { return t.sum(t.mul(t.add_bias(x, b), probe)); };
        note("add_bias 4-d (bias)", finite_diff_check(f, b, eps));
    }
    {
        Tensor x = random_tensor({2, 3, 2, 2}, rng), probe = random_tensor({2, 12}, rng);
        probe.set_requires_grad(false);
        auto f = [&](Tape& t, Tensor& in) -> Tensor& { return t.sum(t.mul(t.flatten(in), probe)); };
        note("flatten", finite_diff_check(f, x, eps));
    }
    {
        Tensor a = random_tensor({5}, rng), b = random_tensor({5}, rng);
        auto f = [&](Tape& t, Tensor&) -> Tensor& { return t.sum(t.scale(t.mul(a, b), -1.7)); };
        note("mul/scale/sum (lhs)", finite_diff_check(f, a, eps));
        note("mul/scale/sum (rhs)", finite_diff_check(f, b, eps));
    }
    {
        Tensor x = random_tensor({1, 2, 7, 7}, rng), k = random_tensor({3, 2, 3, 3}, rng);
        Tensor probe = random_tensor({1, 3, 3, 3}, rng);
        probe.set_requires_grad(false);
        auto f = [&](Tape& t, Tensor&) -> Tensor& { return t.sum(t.mul(t.conv2d(x, k, 2, 0), probe)); };
        note("conv2d stride 2 (input)", finite_diff_check(f, x, eps));
        note("conv2d stride 2 (kernel)", finite_diff_check(f, k, eps));
    }
    const Network probe_net = Network::build(small_conv_architecture(), 7);
    std::size_t params = 0;
    for (std::size_t l = 0; l < probe_net.num_prunable_layers(); ++l) {
        params += probe_net.weights(l).size() + probe_net.bias(l).size();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Outcome o;
    o.passed = worst < 1e-4 && params <= 5000 && seconds < 60.0;
    o.detail = "max rel err " + fmt("%.2e", worst) + " (" + worst_name + "), model params " + std::to_string(params) +
               ", " + fmt("%.1fs", seconds);
    return o;
}

// ---------------------------------------------------------------------------
// 2. saliency formula

Outcome saliency_fidelity() {
    const Dataset data = synthetic_clusters(4, 5, 6, 0.7, 2024);
    const Network net = Network::build({{6}, {LayerSpec::dense(6, 10), LayerSpec::relu(), LayerSpec::dense(10, 7),
                                              LayerSpec::relu(), LayerSpec::dense(7, 4)}},
                                       99);
    const auto fast = average_abs_gradient(net, data);
    const auto slow = per_example_abs_gradient_oracle(net, data);
    double worst = 0.0;
    for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));

    // Zero weights give uniform softmax; inputs +1 and -1 with the same label
    // then produce gradients +-0.5 on every weight.
    const Network zero = Network::build({{1}, {LayerSpec::dense(1, 2)}}, 0, [](std::size_t, Tensor& w, Tensor&) {
        std::fill(w.values().begin(), w.values().end(), 0.0);
    });
    Dataset pair;
    pair.examples = Tensor({2, 1}, std::vector<double>{1.0, -1.0});
    pair.labels = {0, 0};
    pair.num_classes = 2;
    const auto g = average_abs_gradient(zero, pair);
    const bool opposite_ok = g.size() == 2 && g[0] == 0.5 && g[1] == 0.5;

    Outcome o;
    o.passed = data.size() == 20 && worst <= 1e-12 && opposite_ok;
    o.detail = "20-example max |diff| " + fmt("%.2e", worst) + ", opposite-sign g = {" + fmt("%.3g", g[0]) + ", " +
               fmt("%.3g", g[1]) + "} (expect 0.5)";
    return o;
}

// ---------------------------------------------------------------------------
// 3. ranking oracle

Outcome ranking_oracle() {
    std::size_t mismatches = 0, cases = 0, tie_cases = 0;
    for (std::uint64_t inst = 0; inst < 10; ++inst) {
        Rng rng(mix_seed(31337, inst));
        const std::size_t a = 100 + rng.below(150), b = 60 + rng.below(100), c = 40 + rng.below(60);
        Mask current({a, b, c});
        std::vector<double> scores(current.size());
        const std::size_t levels = 3 + rng.below(40);  // few distinct values: heavy ties
        for (std::size_t i = 0; i < current.size(); ++i) {
            scores[i] = inst % 2 ? static_cast<double>(rng.below(levels)) * 0.125 : rng.uniform();
            if (rng.uniform() < 0.15) current[i] = 0;
        }
        if (inst % 2 == 0) {
            for (std::size_t i = 0; i + 7 < scores.size(); i += 7) scores[i + 7] = scores[i];  // duplicated scores
        }
        SaliencyMap map;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            map.scores.push_back(current[i] ? scores[i] : SaliencyMap::kPrunedScore);
        }
        for (double f : {0.1, 0.5, 0.9}) {
            ++cases;
            const Mask got = select_mask(current, map, f);
            const Mask want = full_sort_mask_oracle(current, map.scores, f);
            if (!(got == want)) ++mismatches;
            // does the cut fall inside a run of equal scores?
            std::vector<double> alive;
            for (std::size_t i = 0; i < current.size(); ++i) {
                if (current[i]) alive.push_back(map.scores[i]);
            }
            std::sort(alive.begin(), alive.end());
            const std::size_t k = prune_count(alive.size(), f);
            if (k > 0 && k < alive.size() && alive[k - 1] == alive[k]) ++tie_cases;
        }
    }
    Outcome o;
    o.passed = mismatches == 0 && tie_cases > 0;
    o.detail = std::to_string(mismatches) + " mismatches in " + std::to_string(cases) + " cases (" +
               std::to_string(tie_cases) + " with a tie at the cut)";
    return o;
}

// ---------------------------------------------------------------------------
// 4. schedule

Outcome schedule_arithmetic() {
    const Dataset all = synthetic_clusters(2, 40, 8, 0.5, 4);
    auto [train_set, test_set] = split_rounds(all, 30);
    StrategySpec spec{"Train-w", Timing::training_based, Criterion::magnitude(), 7, 0.5, {}};
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 10;
    RunOptions opt;
    opt.snapshot_gradients = false;
    const auto recs = run_training_based(spec, mlp(8, 20, 2), cfg, train_set, test_set, 5, opt);
    bool ok = recs.size() == 8;
    double worst = 0.0;
    std::size_t previous = 0;
    for (const IterationRecord& r : recs) {
        const double expected = static_cast<double>(r.total) * std::pow(0.5, static_cast<double>(r.level));
        const double dev = std::abs(static_cast<double>(r.surviving) - expected);
        worst = std::max(worst, dev / std::max<double>(1.0, static_cast<double>(r.level)));
        ok = ok && dev <= static_cast<double>(r.level);
        ok = ok && std::abs(r.remaining_fraction - std::pow(0.5, static_cast<double>(r.level))) <=
                       static_cast<double>(r.level) / static_cast<double>(r.total);
        if (r.level > 0) ok = ok && r.surviving == previous - prune_count(previous, 0.5);
        previous = r.surviving;
    }
    std::string counts;
    for (const IterationRecord& r : recs) counts += (counts.empty() ? "" : ",") + std::to_string(r.surviving);
    Outcome o;
    o.passed = ok;
    o.detail = "survivors " + counts + " of " + std::to_string(recs.front().total) +
               ", max deviation per iteration " + fmt("%.3f", worst) + " weights";
    return o;
}

// ---------------------------------------------------------------------------
// 5. rewind

Outcome rewind_exactness() {
    std::size_t violations = 0, checked = 0;
    const Dataset conv_data = [] {
        Rng rng(8);
        Dataset d;
        d.examples = random_tensor({24, 2, 6, 6}, rng);
        d.examples.set_requires_grad(false);
        for (int i = 0; i < 24; ++i) d.labels.push_back(i % 3);
        d.num_classes = 3;
        return d;
    }();
    const Dataset mlp_data = synthetic_clusters(3, 20, 5, 0.6, 9);
    struct Case {
        Architecture arch;
        const Dataset* data;
        Criterion criterion;
    };
    const Case cases[] = {{small_conv_architecture(), &conv_data, Criterion::magnitude()},
                          {small_conv_architecture(), &conv_data, Criterion::gradient_sensitive()},
                          {mlp(5, 12, 3), &mlp_data, Criterion::gradient_sensitive(2.0)}};
    for (const Case& c : cases) {
        Network net = Network::build(c.arch, 13);
        const Network initial = net;
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 5;
        cfg.momentum = 0.9;
        for (int round = 0; round < 3; ++round) {
            train(net, *c.data, cfg);
            const SaliencyMap s = compute_saliency(net, c.criterion, c.data);
            net.apply_mask(select_mask(net.mask(), s, 0.4));
            net.rewind();
            for (std::size_t l = 0; l < net.num_prunable_layers(); ++l) {
                auto bits = net.mask(l);
                for (std::size_t i = 0; i < bits.size(); ++i) {
                    ++checked;
                    const double want = bits[i] ? initial.weights(l)[i] : 0.0;
                    if (std::memcmp(&net.weights(l)[i], &want, sizeof want) != 0) ++violations;
                    if (net.weight_velocity(l)[i] != 0.0) ++violations;
                }
                for (double v : net.bias_velocity(l)) violations += v != 0.0;
            }
        }
    }
    Outcome o;
    o.passed = violations == 0;
    o.detail = std::to_string(violations) + " violations over " + std::to_string(checked) +
               " weight checks (3 cycles x 3 setups)";
    return o;
}

// ---------------------------------------------------------------------------
// 6. dead unit

Outcome dead_weight_elimination() {
    constexpr std::size_t in = 6, hidden = 10, out = 3, dead = 4;
    // Nonnegative inputs, large negative fan-in and bias: unit `dead` never fires.
    Dataset data = synthetic_clusters(out, 20, in, 0.5, 17);
    for (double& v : data.examples.values()) v = std::abs(v);
    auto adjust = [](std::size_t layer, Tensor& w, Tensor& b) {
        if (layer == 0) {
            for (std::size_t i = 0; i < in; ++i) w[i * hidden + dead] = -3.0;
            b[dead] = -10.0;
        } else {
            for (std::size_t c = 0; c < out; ++c) w[dead * out + c] = c % 2 ? -3.0 : 3.0;
        }
    };
    const Architecture arch = mlp(in, hidden, out);
    std::vector<std::size_t> dead_index;
    for (std::size_t i = 0; i < in; ++i) dead_index.push_back(i * hidden + dead);
    for (std::size_t c = 0; c < out; ++c) dead_index.push_back(in * hidden + dead * out + c);

    const Network probe = Network::build(arch, 21, adjust);
    const double total = static_cast<double>(probe.total_prunable());
    const double fraction = 2.0 * static_cast<double>(dead_index.size()) / total;  // >= dead / total

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 10;
    auto survivors = [&](Criterion criterion) {
        StrategySpec spec{"probe", Timing::training_based, criterion, 1, fraction, {}};
        RunOptions opt;
        opt.snapshot_gradients = false;
        const auto recs = run_training_based(spec, Network::build(arch, 21, adjust), cfg, data, data, opt);
        std::size_t alive = 0;
        for (std::size_t i : dead_index) alive += (*recs[0].pruned_mask)[i];
        return alive;
    };
    // the unit must really be dead on every example
    Tensor x = data.examples;
    Tape tape;
    tape.set_recording(false);
    Network copy = probe;
    Tensor& pre = tape.add_bias(tape.matmul(x, copy.weights(0)), copy.bias(0));
    bool never_fires = true;
    for (std::size_t n = 0; n < data.size(); ++n) never_fires = never_fires && pre[n * hidden + dead] < 0.0;

    const std::size_t gs = survivors(Criterion::gradient_sensitive());
    const std::size_t mag = survivors(Criterion::magnitude());
    Outcome o;
    o.passed = never_fires && gs == 0 && mag >= 1;
    o.detail = std::to_string(dead_index.size()) + " dead weights, fraction " + fmt("%.3f", fraction) +
               ": gradient-sensitive keeps " + std::to_string(gs) + ", magnitude keeps " + std::to_string(mag);
    return o;
}

// ---------------------------------------------------------------------------
// 7-10. desk-scale experiment

struct DeskData {
    fs::path train_images, train_labels, test_images, test_labels;
    std::string source;
};

DeskData prepare_desk_data(const fs::path& work) {
    if (const char* dir = std::getenv("TICKETLAB_MNIST_DIR")) {
        const fs::path d(dir);
        DeskData out{d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte", d / "t10k-images-idx3-ubyte",
                     d / "t10k-labels-idx1-ubyte", "MNIST from " + d.string()};
        if (fs::exists(out.train_images)) return out;
        std::fprintf(stderr, "TICKETLAB_MNIST_DIR set but %s missing; using glyphs\n", out.train_images.c_str());
    }
    const fs::path d = work / "glyphs";
    fs::create_directories(d);
    const auto [train_images, train_labels] = testing::make_glyph_idx(10000, 1);
    const auto [test_images, test_labels] = testing::make_glyph_idx(2000, 2);
    DeskData out{d / "train-images.idx", d / "train-labels.idx", d / "test-images.idx", d / "test-labels.idx",
                 "procedural glyphs (10000 train / 2000 test)"};
    write_idx(out.train_images.string(), train_images);
    write_idx(out.train_labels.string(), train_labels);
    write_idx(out.test_images.string(), test_images);
    write_idx(out.test_labels.string(), test_labels);
    return out;
}

ExperimentConfig desk_config(const DeskData& data, const fs::path& out_dir) {
    nlohmann::json j = {
        {"architecture",
         {{"input", {784}},
          {"layers",
           {{{"type", "dense"}, {"in", 784}, {"out", 128}},
            {{"type", "relu"}},
            {{"type", "dense"}, {"in", 128}, {"out", 64}},
            {{"type", "relu"}},
            {{"type", "dense"}, {"in", 64}, {"out", 10}}}}}},
        {"dataset",
         {{"kind", "idx"},
          {"train_images", data.train_images.string()},
          {"train_labels", data.train_labels.string()},
          {"test_images", data.test_images.string()},
          {"test_labels", data.test_labels.string()},
          {"train_limit", 10000},
          {"test_limit", 2000}}},
        {"train", {{"epochs", 3}, {"batch_size", 64}, {"lr", 0.1}, {"momentum", 0.1}, {"weight_decay", 1e-4}}},
        {"strategies", nlohmann::json::array()},
        {"seeds", {1, 2, 3}},
        {"output_dir", out_dir.string()},
        {"histogram_bins", 40},
        {"keep_saliency", true},
    };
    for (const char* timing : {"training_based", "initialization_based"}) {
        for (const char* criterion : {"magnitude", "gradient_sensitive"}) {
            const std::string name = std::string(timing[0] == 't' ? "Train-" : "Init-") +
                                     (criterion[0] == 'm' ? "w" : "wg");
            j["strategies"].push_back(
                {{"name", name}, {"timing", timing}, {"criterion", criterion}, {"iterations", 5}, {"fraction", 0.5}});
        }
    }
    return parse_config(j);
}

Outcome qualitative_ordering(const std::vector<RunRecord>& records, double minutes, const std::string& source) {
    // mean accuracy per (strategy, surviving count)
    std::map<std::pair<std::string, std::size_t>, std::vector<double>> acc;
    for (const RunRecord& r : records) acc[{r.strategy, r.surviving}].push_back(r.test_accuracy);
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    bool ok = minutes <= 30.0;
    std::string detail;
    for (const char* crit : {"w", "wg"}) {
        const std::string tr = std::string("Train-") + crit, in = std::string("Init-") + crit;
        std::size_t deepest = 0;
        bool found = false;
        for (const auto& [key, values] : acc) {
            if (key.first != tr || values.size() != 3) continue;
            auto it = acc.find({in, key.second});
            if (it == acc.end() || it->second.size() != 3) continue;
            if (!found || key.second < deepest) deepest = key.second;
            found = true;
        }
        if (!found) return {false, "no shared sparsity level for " + tr + " / " + in};
        const double a = mean(acc[{tr, deepest}]), b = mean(acc[{in, deepest}]);
        ok = ok && a >= b;
        detail += tr + " " + fmt("%.4f", a) + " vs " + in + " " + fmt("%.4f", b) + " at " + std::to_string(deepest) +
                  " weights; ";
    }
    detail += source + ", " + fmt("%.1f min", minutes);
    return {ok, detail};
}

Outcome histogram_hole(const std::vector<RunRecord>& records, std::size_t layer, const fs::path& out_dir) {
    std::map<std::uint64_t, std::map<std::size_t, const RunRecord*>> by_seed;
    for (const RunRecord& r : records) {
        if (r.strategy == "Train-w") by_seed[r.seed][r.level] = &r;
    }
    bool ok = !by_seed.empty();
    std::string detail;
    for (const auto& [seed, levels] : by_seed) {
        const RunRecord* first = levels.at(0);
        const RunRecord* second = levels.at(1);
        if (!first->saliency || !first->pruned_mask || !second->snapshot) return {false, "missing saved saliency"};
        // band: largest saliency (= |w| here) among this layer's weights pruned in round one
        const std::size_t offset = first->pruned_mask->layer_offset(layer);
        const auto bits = first->pruned_mask->layer(layer);
        double theta = 0.0;
        std::size_t pruned = 0;
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (!bits[i]) {
                theta = std::max(theta, first->saliency->scores[offset + i]);
                ++pruned;
            }
        }
        std::size_t inside = 0, dense_inside = 0;
        for (double w : second->snapshot->weights) inside += std::abs(w) < theta;
        for (double w : first->snapshot->weights) dense_inside += std::abs(w) < theta;
        // the written histogram must agree
        const fs::path file = out_dir / "histograms" / ("Train-w__seed" + std::to_string(seed) + "__level1.csv");
        const bool file_ok = fs::exists(file) && second->snapshot->layer == layer;
        ok = ok && inside == 0 && pruned > 0 && file_ok;
        detail += "seed " + std::to_string(seed) + ": " + std::to_string(inside) + " of " +
                  std::to_string(second->snapshot->weights.size()) + " in (-" + fmt("%.4g", theta) + ", " +
                  fmt("%.4g", theta) + ") [dense: " + std::to_string(dense_inside) + " of " +
                  std::to_string(first->snapshot->weights.size()) + "]; ";
    }
    detail += "layer " + std::to_string(layer);
    return {ok, detail};
}

Outcome determinism(const ExperimentConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                    const fs::path& work) {
    std::size_t compared = 0, differing = 0;
    // one expensive cell of the desk experiment, re-run from scratch
    ExperimentConfig one = cfg;
    one.keep_saliency = false;
    for (const char* name : {"Train-wg", "Init-w"}) {
        for (const StrategySpec& s : one.strategies) {
            if (s.name != name) continue;
            const std::uint64_t seed = one.seeds.back();
            const auto recs = run_cell(one, s, seed, train_set, test_set);
            const std::string stem = s.name + "__seed" + std::to_string(seed) + ".csv";
            ++compared;
            differing += emit_raw(recs) != slurp(cfg.output_dir / "raw" / stem);
            ++compared;
            differing += emit_epochs(recs) != slurp(cfg.output_dir / "epochs" / stem);
        }
    }
    // a whole small experiment, twice, into different directories
    nlohmann::json j = nlohmann::json::parse(R"({
      "architecture": {"input": [6], "layers": [{"type": "dense", "in": 6, "out": 12}, {"type": "relu"},
                                                 {"type": "dense", "in": 12, "out": 4}]},
      "dataset": {"kind": "synthetic", "num_classes": 4, "train_per_class": 30, "test_per_class": 10, "dims": 6,
                  "spread": 0.5, "seed": 3},
      "train": {"epochs": 2, "batch_size": 16},
      "strategies": [{"name": "Train-wg", "timing": "training_based", "criterion": "gradient_sensitive",
                      "iterations": 3, "fraction": 0.4},
                     {"name": "Init-w", "timing": "initialization_based", "criterion": "magnitude",
                      "iterations": 3, "fraction": 0.4}],
      "seeds": [4, 5]
    })");
    std::vector<fs::path> dirs{work / "determinism_a", work / "determinism_b"};
    for (const fs::path& d : dirs) {
        fs::remove_all(d);
        j["output_dir"] = d.string();
        run_experiment(parse_config(j));
    }
    for (const auto& entry : fs::recursive_directory_iterator(dirs[0])) {
        if (!entry.is_regular_file()) continue;
        ++compared;
        differing += slurp(entry.path()) != slurp(dirs[1] / fs::relative(entry.path(), dirs[0]));
    }
    return {differing == 0 && compared > 4,
            std::to_string(differing) + " of " + std::to_string(compared) + " files differ on rerun"};
}

Outcome bookkeeping(const std::vector<RunRecord>& records, const fs::path& out_dir) {
    std::size_t bad = 0;
    double worst = 0.0;
    for (const RunRecord& r : records) {
        std::size_t sum = 0;
        for (std::size_t c : r.remaining_per_layer) sum += c;
        if (sum != r.surviving) ++bad;
        const double gap = std::abs(r.remaining_fraction - (1.0 - r.sparsity));
        worst = std::max(worst, gap);
        if (!(gap <= 1e-15)) ++bad;
    }
    // and in the emitted CSVs, as parsed back
    std::size_t rows = 0;
    for (const auto& entry : fs::directory_iterator(out_dir / "raw")) {
        std::ifstream in(entry.path());
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto f = split_csv_line(line);
            const double sparsity = std::strtod(f[4].c_str(), nullptr);
            const double remaining = std::strtod(f[5].c_str(), nullptr);
            worst = std::max(worst, std::abs(remaining - (1.0 - sparsity)));
            if (!(std::abs(remaining - (1.0 - sparsity)) <= 1e-15)) ++bad;
            ++rows;
        }
    }
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> layer_sums;
    {
        std::ifstream in(out_dir / "layerwise_counts.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            const auto f = split_csv_line(line);
            layer_sums[{f[0], f[1], f[2]}] += std::stoul(f[5]);
        }
    }
    for (const RunRecord& r : records) {
        if (layer_sums[{r.strategy, std::to_string(r.seed), std::to_string(r.level)}] != r.surviving) ++bad;
    }
    return {bad == 0, std::to_string(bad) + " violations over " + std::to_string(records.size()) + " records and " +
                          std::to_string(rows) + " CSV rows; max |remaining - (1 - sparsity)| " + fmt("%.1e", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_work");
    fs::create_directories(work);
    bool all = true;
    int number = 0;
    auto report = [&](const char* title, const std::function<Outcome()>& run) {
        ++number;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all = all && o.passed;
        std::printf("%s  %2d %-28s %s\n", o.passed ? "PASS" : "FAIL", number, title, o.detail.c_str());
        std::fflush(stdout);
    };

    report("gradient correctness", gradient_correctness);
    report("saliency formula", saliency_fidelity);
    report("ranking oracle", ranking_oracle);
    report("schedule arithmetic", schedule_arithmetic);
    report("rewind exactness", rewind_exactness);
    report("dead-weight elimination", dead_weight_elimination);

    // The desk-scale experiment feeds criteria 7 to 10.
    std::vector<RunRecord> records;
    ExperimentConfig cfg;
    Dataset train_set, test_set;
    std::string source, setup_error;
    double minutes = 0.0;
    try {
        const DeskData data = prepare_desk_data(work);
        source = data.source;
        const fs::path out_dir = work / "experiment";
        fs::remove_all(out_dir);
        cfg = desk_config(data, out_dir);
        std::tie(train_set, test_set) = load_datasets(cfg.dataset);
        const auto start = std::chrono::steady_clock::now();
        const ExperimentResult result = run_experiment(cfg, train_set, test_set);
        minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
        for (const CellResult& c : result.cells) {
            if (c.error) setup_error += c.strategy + "/" + std::to_string(c.seed) + ": " + *c.error + "; ";
        }
        records = result.records();
        std::fprintf(stderr, "%s", slurp(out_dir / "accuracy.csv").c_str());
    } catch (const std::exception& e) {
        setup_error = e.what();
    }
    auto guarded = [&](const std::function<Outcome()>& f) {
        return [&, f]() -> Outcome {
            if (!setup_error.empty()) return {false, "experiment failed: " + setup_error};
            return f();
        };
    };
    report("train >= init (deepest)", guarded([&] { return qualitative_ordering(records, minutes, source); }));
    report("histogram hole", guarded([&] {
               return histogram_hole(records, cfg.histogram_layer.value_or(1), cfg.output_dir);
           }));
    report("determinism", guarded([&] { return determinism(cfg, train_set, test_set, work); }));
    report("bookkeeping identities", guarded([&] { return bookkeeping(records, cfg.output_dir); }));
    return all ? 0 : 1;
}
