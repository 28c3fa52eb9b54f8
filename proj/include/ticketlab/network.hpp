// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0

#ifndef TICKETLAB_NETWORK_HPP
#define TICKETLAB_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "error.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace ticketlab {

enum class LayerKind { dense, conv2d, relu, maxpool2x2, flatten };

inline std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2x2: return "maxpool2x2";
        case LayerKind::flatten: return "flatten";
    }
    return "unknown";
}

inline LayerKind parse_layer_kind(const std::string& name) {
    for (LayerKind k : {LayerKind::dense, LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool2x2, LayerKind::flatten}) {
        if (to_string(k) == name) return k;
    }
    throw ConfigError("unknown layer type '" + name + "'");
}

/// One entry of a sequential architecture. `in`/`out` are features for dense
/// layers and channels for conv2d layers.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out}; }
    static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                            std::size_t padding = 0) {
        return {LayerKind::conv2d, in, out, kernel, stride, padding};
    }
    static LayerSpec relu() { return {LayerKind::relu}; }
    static LayerSpec maxpool2x2() { return {LayerKind::maxpool2x2}; }
    static LayerSpec flatten() { return {LayerKind::flatten}; }

    bool parameterized() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

    std::string describe() const {
        switch (kind) {
            case LayerKind::dense: return "dense(" + std::to_string(in) + "->" + std::to_string(out) + ")";
            case LayerKind::conv2d:
                return "conv2d(" + std::to_string(in) + "->" + std::to_string(out) + ", k" + std::to_string(kernel) +
                       " s" + std::to_string(stride) + " p" + std::to_string(padding) + ")";
            default: return to_string(kind);
        }
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-example input shape plus the ordered layers.
struct Architecture {
    Shape input;
    std::vector<LayerSpec> layers;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Per-example output shape of every layer. Throws ConfigError naming the
/// first pair of neighbours whose shapes do not compose.
inline std::vector<Shape> infer_shapes(const Architecture& arch) {
    if (arch.input.empty() || shape_size(arch.input) == 0) throw ConfigError("architecture input shape is empty");
    std::vector<Shape> shapes;
    Shape current = arch.input;
    std::string previous = "input" + shape_string(arch.input);
    for (const LayerSpec& layer : arch.layers) {
        auto mismatch = [&](const std::string& why) {
            return ConfigError("layer " + layer.describe() + " cannot follow " + previous + ": " + why);
        };
        switch (layer.kind) {
            case LayerKind::dense:
                if (current.size() != 1 || current[0] != layer.in) {
                    throw mismatch("expects " + std::to_string(layer.in) + " features, receives " + shape_string(current));
                }
                if (layer.out == 0) throw mismatch("zero outputs");
                current = {layer.out};
                break;
            case LayerKind::conv2d: {
                if (current.size() != 3 || current[0] != layer.in) {
                    throw mismatch("expects " + std::to_string(layer.in) + " x H x W, receives " + shape_string(current));
                }
                if (layer.out == 0) throw mismatch("zero output channels");
                std::size_t h = 0, w = 0;
                try {
                    h = conv_output_size(current[1], layer.kernel, layer.stride, layer.padding);
                    w = conv_output_size(current[2], layer.kernel, layer.stride, layer.padding);
                } catch (const ConfigError& e) {
                    throw mismatch(e.what());
                }
                current = {layer.out, h, w};
                break;
            }
            case LayerKind::relu: break;
            case LayerKind::maxpool2x2:
                if (current.size() != 3 || current[1] < 2 || current[2] < 2) {
                    throw mismatch("needs C x H x W with H, W >= 2, receives " + shape_string(current));
                }
                current = {current[0], current[1] / 2, current[2] / 2};
                break;
            case LayerKind::flatten: current = {shape_size(current)}; break;
        }
        shapes.push_back(current);
        previous = layer.describe() + shape_string(current);
    }
    return shapes;
}

/// Binary survival flags for every prunable weight, stored flat in
/// enumeration order (layer order, then row-major within the layer).
class Mask {
public:
    Mask() = default;

    explicit Mask(std::vector<std::size_t> layer_sizes, std::uint8_t fill = 1) : sizes_(std::move(layer_sizes)) {
        std::size_t total = 0;
        for (std::size_t s : sizes_) {
            offsets_.push_back(total);
            total += s;
        }
        bits_.assign(total, fill ? 1 : 0);
    }

    std::size_t size() const noexcept { return bits_.size(); }
    std::size_t layers() const noexcept { return sizes_.size(); }
    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    std::size_t layer_offset(std::size_t layer) const { return offsets_.at(layer); }

    std::span<std::uint8_t> layer(std::size_t i) { return {bits_.data() + offsets_.at(i), sizes_[i]}; }
    std::span<const std::uint8_t> layer(std::size_t i) const { return {bits_.data() + offsets_.at(i), sizes_[i]}; }

    std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
    std::uint8_t& operator[](std::size_t i) { return bits_[i]; }
    const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

    /// Which layer flat index i belongs to.
    std::size_t layer_of(std::size_t i) const {
        auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
        return static_cast<std::size_t>(it - offsets_.begin()) - 1;
    }

    std::size_t count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }
    std::size_t count(std::size_t layer) const {
        auto bits = this->layer(layer);
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1));
    }
    std::vector<std::size_t> counts_per_layer() const {
        std::vector<std::size_t> counts;
        for (std::size_t l = 0; l < layers(); ++l) counts.push_back(count(l));
        return counts;
    }

    /// True when every surviving entry here also survives in `other`.
    bool subset_of(const Mask& other) const {
        if (sizes_ != other.sizes_) return false;
        for (std::size_t i = 0; i < bits_.size(); ++i) {
            if (bits_[i] && !other.bits_[i]) return false;
        }
        return true;
    }

    friend bool operator==(const Mask& a, const Mask& b) { return a.sizes_ == b.sizes_ && a.bits_ == b.bits_; }

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<std::uint8_t> bits_;
};

/// One prunable weight as seen by the global ranking.
struct PrunableEntry {
    std::size_t layer;  // prunable layer index
    std::size_t index;  // row-major index within the layer's weights
    double value;
    bool alive;
};

/// How forward() feeds weights into the graph. `stored_weights` uses the
/// weights as held (already zero where masked); `mask_product` multiplies by
/// the mask explicitly on the tape. Both must agree bit for bit.
enum class ForwardPath { stored_weights, mask_product };

/// Sequential conv/dense classifier with per-layer pruning masks and a
/// snapshot of its initial weights for rewinding.
///
/// Dense weights are stored [in x out], conv kernels [F x C x kh x kw].
class Network {
public:
    /// Called once per parameterized layer after the default initialization
    /// and before the initial snapshot is taken.
    using Initializer = std::function<void(std::size_t layer, Tensor& weights, Tensor& bias)>;

    /// Kaiming-uniform (fan-in, ReLU gain) weights from a generator seeded by
    /// `seed`, zero biases, all-ones masks.
    static Network build(const Architecture& arch, std::uint64_t seed, const Initializer& adjust = {}) {
        Network net;
        net.arch_ = arch;
        net.shapes_ = infer_shapes(arch);
        Rng rng(seed);
        for (std::size_t i = 0; i < arch.layers.size(); ++i) {
            const LayerSpec& spec = arch.layers[i];
            if (!spec.parameterized()) continue;
            Shape wshape = spec.kind == LayerKind::dense ? Shape{spec.in, spec.out}
                                                         : Shape{spec.out, spec.in, spec.kernel, spec.kernel};
            const std::size_t fan_in = spec.kind == LayerKind::dense ? spec.in : spec.in * spec.kernel * spec.kernel;
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            Params p;
            p.layer = i;
            p.weights = Tensor(wshape, true);
            for (double& w : p.weights.values()) w = rng.uniform(-bound, bound);
            p.bias = Tensor({spec.out}, true);
            if (adjust) adjust(net.params_.size(), p.weights, p.bias);
            if (p.weights.shape() != wshape || p.bias.shape() != Shape{spec.out}) {
                throw ConfigError("initializer changed the parameter shapes of layer " + spec.describe());
            }
            p.mask.assign(p.weights.size(), 1);
            p.initial_weights = p.weights.values();
            p.initial_bias = p.bias.values();
            p.weight_velocity.assign(p.weights.size(), 0.0);
            p.bias_velocity.assign(p.bias.size(), 0.0);
            net.params_.push_back(std::move(p));
        }
        return net;
    }

    const Architecture& architecture() const noexcept { return arch_; }
    Shape output_shape() const { return shapes_.empty() ? arch_.input : shapes_.back(); }

    std::size_t num_prunable_layers() const noexcept { return params_.size(); }
    /// Position of prunable layer `l` in the architecture's layer list.
    std::size_t architecture_index(std::size_t l) const { return params_.at(l).layer; }

    Tensor& weights(std::size_t l) { return params_.at(l).weights; }
    const Tensor& weights(std::size_t l) const { return params_.at(l).weights; }
    Tensor& bias(std::size_t l) { return params_.at(l).bias; }
    const Tensor& bias(std::size_t l) const { return params_.at(l).bias; }
    std::span<const std::uint8_t> mask(std::size_t l) const { return params_.at(l).mask; }
    std::span<const double> initial_weights(std::size_t l) const { return params_.at(l).initial_weights; }
    std::vector<double>& weight_velocity(std::size_t l) { return params_.at(l).weight_velocity; }
    const std::vector<double>& weight_velocity(std::size_t l) const { return params_.at(l).weight_velocity; }
    std::vector<double>& bias_velocity(std::size_t l) { return params_.at(l).bias_velocity; }
    const std::vector<double>& bias_velocity(std::size_t l) const { return params_.at(l).bias_velocity; }

    std::vector<std::size_t> layer_sizes() const {
        std::vector<std::size_t> sizes;
        for (const Params& p : params_) sizes.push_back(p.weights.size());
        return sizes;
    }

    Mask mask() const {
        Mask m(layer_sizes());
        for (std::size_t l = 0; l < params_.size(); ++l) std::ranges::copy(params_[l].mask, m.layer(l).begin());
        return m;
    }

    /// Records the forward pass on `tape`. `batch` is [N x input...].
    Tensor& forward(Tape& tape, Tensor& batch, ForwardPath path = ForwardPath::stored_weights) {
        check_batch(batch);
        Tensor* x = &batch;
        std::size_t next_param = 0;
        for (const LayerSpec& spec : arch_.layers) {
            switch (spec.kind) {
                case LayerKind::dense:
                case LayerKind::conv2d: {
                    Params& p = params_[next_param++];
                    Tensor* w = &p.weights;
                    if (path == ForwardPath::mask_product) {
                        Tensor gate(p.weights.shape());
                        std::ranges::transform(p.mask, gate.values().begin(),
                                               [](std::uint8_t b) { return static_cast<double>(b); });
                        w = &tape.mul(p.weights, tape.constant(std::move(gate)));
                    }
                    if (spec.kind == LayerKind::dense) {
                        x = &tape.add_bias(tape.matmul(*x, *w), p.bias);
                    } else {
                        x = &tape.add_bias(tape.conv2d(*x, *w, spec.stride, spec.padding), p.bias);
                    }
                    break;
                }
                case LayerKind::relu: x = &tape.relu(*x); break;
                case LayerKind::maxpool2x2: x = &tape.maxpool2x2(*x); break;
                case LayerKind::flatten: x = &tape.flatten(*x); break;
            }
        }
        return *x;
    }

    /// Logits without recording anything; leaves the network untouched.
    Tensor predict(const Tensor& batch) const {
        Tape tape;
        tape.set_recording(false);
        // With recording off no operand is written, so dropping const is safe.
        auto& self = const_cast<Network&>(*this);
        Tensor input(batch.shape(), batch.values());
        return self.forward(tape, input);
    }

    /// Installs `mask` and zeroes the weights it removes. Unless `reset` is
    /// set, the new mask must be a subset of the current one.
    void apply_mask(const Mask& mask, bool reset = false) {
        if (mask.layer_sizes() != layer_sizes()) {
            throw InputError("mask layer sizes do not match the network's prunable layers");
        }
        if (!reset && !mask.subset_of(this->mask())) {
            throw UsageError("mask would resurrect pruned weights; pass reset to replace the mask wholesale");
        }
        for (std::size_t l = 0; l < params_.size(); ++l) {
            Params& p = params_[l];
            auto bits = mask.layer(l);
            for (std::size_t i = 0; i < bits.size(); ++i) {
                p.mask[i] = bits[i] ? 1 : 0;
                if (!p.mask[i]) {
                    p.weights[i] = 0.0;
                    p.weight_velocity[i] = 0.0;
                }
            }
        }
    }

    /// Restores surviving weights (and all biases) to their initial values,
    /// leaves pruned weights at zero and clears the momentum buffers.
    void rewind() {
        for (Params& p : params_) {
            for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = p.mask[i] ? p.initial_weights[i] : 0.0;
            p.bias.values() = p.initial_bias;
        }
        zero_optimizer_state();
    }

    void zero_optimizer_state() {
        for (Params& p : params_) {
            std::ranges::fill(p.weight_velocity, 0.0);
            std::ranges::fill(p.bias_velocity, 0.0);
        }
    }

    void zero_grad() {
        for (Params& p : params_) {
            p.weights.zero_grad();
            p.bias.zero_grad();
        }
    }

    /// Every conv/dense weight in layer order, then row-major. Biases are
    /// never part of this population.
    std::vector<PrunableEntry> prunable_parameters() const {
        std::vector<PrunableEntry> entries;
        entries.reserve(total_prunable());
        for (std::size_t l = 0; l < params_.size(); ++l) {
            const Params& p = params_[l];
            for (std::size_t i = 0; i < p.weights.size(); ++i) entries.push_back({l, i, p.weights[i], p.mask[i] != 0});
        }
        return entries;
    }

    std::size_t total_prunable() const {
        std::size_t n = 0;
        for (const Params& p : params_) n += p.weights.size();
        return n;
    }

    std::size_t surviving() const {
        std::size_t n = 0;
        for (const Params& p : params_) n += static_cast<std::size_t>(std::ranges::count(p.mask, 1));
        return n;
    }

    std::vector<std::size_t> remaining_per_layer() const { return mask().counts_per_layer(); }

    /// Fraction of prunable weights removed.
    double sparsity() const {
        return 1.0 - static_cast<double>(surviving()) / static_cast<double>(total_prunable());
    }

    friend bool operator==(const Network& a, const Network& b) {
        return a.arch_ == b.arch_ && a.params_ == b.params_;
    }

private:
    struct Params {
        std::size_t layer = 0;
        Tensor weights;
        Tensor bias;
        std::vector<std::uint8_t> mask;
        std::vector<double> initial_weights;
        std::vector<double> initial_bias;
        std::vector<double> weight_velocity;
        std::vector<double> bias_velocity;

        friend bool operator==(const Params& a, const Params& b) {
            return a.layer == b.layer && a.weights == b.weights && a.bias == b.bias && a.mask == b.mask &&
                   a.initial_weights == b.initial_weights && a.initial_bias == b.initial_bias &&
                   a.weight_velocity == b.weight_velocity && a.bias_velocity == b.bias_velocity;
        }
    };

    void check_batch(const Tensor& batch) const {
        Shape expected = arch_.input;
        if (batch.rank() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), batch.shape().begin() + 1)) {
            throw InputError("batch of shape " + shape_string(batch.shape()) + " does not match network input " +
                             shape_string(expected));
        }
    }

    Architecture arch_;
    std::vector<Shape> shapes_;
    std::vector<Params> params_;
};

}  // namespace ticketlab

#endif  // TICKETLAB_NETWORK_HPP
