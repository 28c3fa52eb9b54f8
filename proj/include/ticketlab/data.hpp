// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// Datasets: IDX and CIFAR-10 binary loaders, seeded synthetic blobs, and
// minibatch iteration.

#ifndef TICKETLAB_DATA_HPP
#define TICKETLAB_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "tensor.hpp"

namespace ticketlab {

/// Per-channel affine standardization constants.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> stddev;

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct Dataset {
    Tensor examples;  // [N x ...]
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::string split;
    std::optional<Normalization> normalization;  // set once normalized

    std::size_t size() const noexcept { return labels.size(); }
    bool empty() const noexcept { return labels.empty(); }
    bool normalized() const noexcept { return normalization.has_value(); }

    Shape example_shape() const { return Shape(examples.shape().begin() + 1, examples.shape().end()); }
    std::size_t example_size() const { return examples.size() / std::max<std::size_t>(size(), 1); }

    /// Channel count for normalization: dimension 1 of image-shaped data,
    /// otherwise a single channel over all features.
    std::size_t channels() const { return examples.rank() == 4 ? examples.dim(1) : 1; }

    /// Throws InputError unless labels and examples agree.
    void validate() const {
        if (examples.rank() < 2 || examples.dim(0) != labels.size()) {
            throw InputError("dataset has " + std::to_string(labels.size()) + " labels but examples of shape " +
                             shape_string(examples.shape()));
        }
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
                throw InputError("label " + std::to_string(labels[i]) + " of example " + std::to_string(i) +
                                 " is outside [0, " + std::to_string(num_classes) + ")");
            }
        }
    }

    /// Examples at `indices`, in that order, with the same metadata.
    Dataset subset(std::span<const std::size_t> indices) const {
        Dataset out;
        const std::size_t stride = example_size();
        Shape shape = examples.shape();
        shape[0] = indices.size();
        std::vector<double> values;
        values.reserve(indices.size() * stride);
        for (std::size_t i : indices) {
            auto first = examples.values().begin() + static_cast<std::ptrdiff_t>(i * stride);
            values.insert(values.end(), first, first + static_cast<std::ptrdiff_t>(stride));
            out.labels.push_back(labels.at(i));
        }
        out.examples = Tensor(std::move(shape), std::move(values));
        out.num_classes = num_classes;
        out.split = split;
        out.normalization = normalization;
        return out;
    }

    /// Reinterprets every example under `shape` (same element count).
    void reshape_examples(const Shape& shape) {
        Shape full{size()};
        full.insert(full.end(), shape.begin(), shape.end());
        examples.reshape(full);
    }
};

/// Mean and population standard deviation per channel. Channels with zero
/// spread get a standard deviation of 1.
inline Normalization compute_normalization(const Dataset& data) {
    if (data.empty()) throw InputError("cannot compute normalization of an empty dataset");
    const std::size_t C = data.channels();
    const std::size_t N = data.size();
    const std::size_t inner = data.examples.size() / (N * C);
    Normalization norm{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
    for (std::size_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* p = data.examples.data() + (n * C + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) sum += p[i];
        }
        const double count = static_cast<double>(N * inner);
        const double mean = sum / count;
        double sq = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* p = data.examples.data() + (n * C + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mean) * (p[i] - mean);
        }
        const double sd = std::sqrt(sq / count);
        norm.mean[c] = mean;
        norm.stddev[c] = sd > 0.0 ? sd : 1.0;
    }
    return norm;
}

/// Standardizes in place. A dataset is normalized at most once.
inline void normalize(Dataset& data, const Normalization& norm) {
    if (data.normalized()) throw UsageError("dataset '" + data.split + "' is already normalized");
    const std::size_t C = data.channels();
    if (norm.mean.size() != C || norm.stddev.size() != C) {
        throw InputError("normalization has " + std::to_string(norm.mean.size()) + " channels, dataset has " +
                         std::to_string(C));
    }
    const std::size_t N = data.size();
    const std::size_t inner = data.examples.size() / (N * C);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            double* p = data.examples.data() + (n * C + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) p[i] = (p[i] - norm.mean[c]) / norm.stddev[c];
        }
    }
    data.normalization = norm;
}

// ---------------------------------------------------------------------------
// IDX

/// Raw contents of an IDX file holding unsigned bytes (type code 0x08).
struct IdxArray {
    std::vector<std::size_t> dims;
    std::vector<std::uint8_t> data;

    friend bool operator==(const IdxArray&, const IdxArray&) = default;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

/// Parses the big-endian IDX container: two zero bytes, type code, rank,
/// then one 32-bit size per dimension and the payload.
inline IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw FormatError("IDX header truncated", bytes.size());
    if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("IDX magic must start with two zero bytes", 0);
    if (bytes[2] != 0x08) throw FormatError("only unsigned-byte IDX data (type 0x08) is supported", 2);
    const std::size_t rank = bytes[3];
    if (rank == 0) throw FormatError("IDX rank must be positive", 3);
    if (bytes.size() < 4 + 4 * rank) throw FormatError("IDX dimension table truncated", bytes.size());
    IdxArray out;
    std::size_t count = 1;
    for (std::size_t d = 0; d < rank; ++d) {
        out.dims.push_back(detail::read_be32(bytes, 4 + 4 * d));
        count *= out.dims.back();
    }
    const std::size_t header = 4 + 4 * rank;
    if (bytes.size() < header + count) throw FormatError("IDX payload truncated", bytes.size());
    if (bytes.size() > header + count) throw FormatError("IDX file has trailing bytes", header + count);
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

inline IdxArray read_idx(const std::string& path) { return parse_idx(detail::read_file(path)); }

inline std::vector<std::uint8_t> encode_idx(const IdxArray& array) {
    std::vector<std::uint8_t> bytes{0, 0, 0x08, static_cast<std::uint8_t>(array.dims.size())};
    for (std::size_t d : array.dims) {
        const auto v = static_cast<std::uint32_t>(d);
        bytes.insert(bytes.end(), {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                                   static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)});
    }
    bytes.insert(bytes.end(), array.data.begin(), array.data.end());
    return bytes;
}

inline void write_idx(const std::string& path, const IdxArray& array) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    const auto bytes = encode_idx(array);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Builds a dataset from parsed IDX images ([N x H x W] or [N x D]) and labels
/// ([N]). Pixels are scaled to [0, 1] and then standardized, with `norm` if
/// given (use the train split's constants for a test split) or with the
/// images' own statistics otherwise.
inline Dataset dataset_from_idx(const IdxArray& images, const IdxArray& labels,
                                const std::optional<Normalization>& norm = std::nullopt) {
    if (labels.dims.size() != 1) throw FormatError("IDX labels must be one-dimensional", 3);
    if (images.dims.empty() || images.dims[0] != labels.dims[0]) {
        throw FormatError("IDX image count " + std::to_string(images.dims.empty() ? 0 : images.dims[0]) +
                              " does not match label count " + std::to_string(labels.dims[0]),
                          4);
    }
    if (images.dims[0] == 0) throw FormatError("IDX file holds no examples", 4);
    Shape shape{images.dims[0]};
    if (images.dims.size() == 3) {
        shape.insert(shape.end(), {1, images.dims[1], images.dims[2]});
    } else {
        shape.insert(shape.end(), images.dims.begin() + 1, images.dims.end());
    }
    Dataset data;
    std::vector<double> values(images.data.size());
    std::ranges::transform(images.data, values.begin(), [](std::uint8_t b) { return b / 255.0; });
    data.examples = Tensor(std::move(shape), std::move(values));
    int max_label = 0;
    for (std::uint8_t l : labels.data) {
        data.labels.push_back(l);
        max_label = std::max<int>(max_label, l);
    }
    data.num_classes = static_cast<std::size_t>(max_label) + 1;
    normalize(data, norm ? *norm : compute_normalization(data));
    return data;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        const std::optional<Normalization>& norm = std::nullopt) {
    return dataset_from_idx(read_idx(images_path), read_idx(labels_path), norm);
}

// ---------------------------------------------------------------------------
// CIFAR-10

inline constexpr std::size_t kCifarRecord = 3073;

/// Parses concatenated CIFAR-10 records (label byte + 3 x 32 x 32 pixels,
/// channel-major). Pixels are scaled to [0, 1] but not standardized.
inline Dataset parse_cifar10(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw FormatError("CIFAR-10 batch is empty", 0);
    if (bytes.size() % kCifarRecord != 0) {
        throw FormatError("CIFAR-10 batch length " + std::to_string(bytes.size()) + " is not a multiple of 3073",
                          bytes.size() - bytes.size() % kCifarRecord);
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    Dataset data;
    std::vector<double> values(n * 3072);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
        if (rec[0] > 9) throw FormatError("CIFAR-10 label byte out of range", r * kCifarRecord);
        data.labels.push_back(rec[0]);
        for (std::size_t i = 0; i < 3072; ++i) values[r * 3072 + i] = rec[1 + i] / 255.0;
    }
    data.examples = Tensor({n, 3, 32, 32}, std::move(values));
    data.num_classes = 10;
    return data;
}

/// Concatenates the given batch files and standardizes per channel.
inline Dataset load_cifar10_binary(std::span<const std::string> paths,
                                   const std::optional<Normalization>& norm = std::nullopt) {
    if (paths.empty()) throw InputError("no CIFAR-10 batch files given");
    std::vector<std::uint8_t> all;
    for (const std::string& path : paths) {
        auto bytes = detail::read_file(path);
        if (bytes.size() % kCifarRecord != 0) {
            throw FormatError("CIFAR-10 file '" + path + "' length is not a multiple of 3073",
                              bytes.size() - bytes.size() % kCifarRecord);
        }
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    Dataset data = parse_cifar10(all);
    normalize(data, norm ? *norm : compute_normalization(data));
    return data;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Gaussian blobs: class centers uniform in [-1, 1]^dims, points at
/// center + spread * N(0, I). Examples are interleaved by class (0, 1, ...,
/// C-1, 0, 1, ...), so every prefix of whole rounds is balanced.
inline Dataset synthetic_clusters(std::size_t num_classes, std::size_t per_class, std::size_t dims, double spread,
                                  std::uint64_t seed) {
    if (per_class == 0 || num_classes == 0 || dims == 0) {
        throw ConfigError("synthetic_clusters needs positive class count, per_class and dims");
    }
    Rng rng(seed);
    std::vector<double> centers(num_classes * dims);
    for (double& c : centers) c = rng.uniform(-1.0, 1.0);
    Dataset data;
    std::vector<double> values;
    values.reserve(num_classes * per_class * dims);
    for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < num_classes; ++c) {
            for (std::size_t d = 0; d < dims; ++d) values.push_back(centers[c * dims + d] + spread * rng.normal());
            data.labels.push_back(static_cast<int>(c));
        }
    }
    data.examples = Tensor({num_classes * per_class, dims}, std::move(values));
    data.num_classes = num_classes;
    return data;
}

/// Splits an interleaved dataset into its first `train_rounds` rounds and the
/// remainder.
inline std::pair<Dataset, Dataset> split_rounds(const Dataset& data, std::size_t train_rounds) {
    const std::size_t cut = std::min(data.size(), train_rounds * data.num_classes);
    std::vector<std::size_t> head(cut), tail(data.size() - cut);
    for (std::size_t i = 0; i < cut; ++i) head[i] = i;
    for (std::size_t i = cut; i < data.size(); ++i) tail[i - cut] = i;
    std::pair<Dataset, Dataset> out{data.subset(head), data.subset(tail)};
    out.first.split = "train";
    out.second.split = "test";
    return out;
}

// ---------------------------------------------------------------------------
// Batching

/// Seeded Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
}

struct Batch {
    Tensor inputs;
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

/// One epoch of minibatches over a dataset, gathered lazily. Every example
/// appears exactly once; the final batch may be short.
class BatchSequence {
public:
    BatchSequence(const Dataset& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed)
        : data_(&data), batch_size_(batch_size) {
        if (batch_size == 0) throw ConfigError("batch size must be at least 1");
        if (shuffle_seed) {
            order_ = permutation(data.size(), *shuffle_seed);
        } else {
            order_.resize(data.size());
            for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        }
    }

    std::size_t size() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }
    const std::vector<std::size_t>& order() const noexcept { return order_; }

    std::span<const std::size_t> indices(std::size_t b) const {
        const std::size_t first = b * batch_size_;
        return std::span<const std::size_t>(order_).subspan(first, std::min(batch_size_, order_.size() - first));
    }

    Batch operator[](std::size_t b) const {
        auto idx = indices(b);
        const std::size_t stride = data_->example_size();
        Shape shape = data_->examples.shape();
        shape[0] = idx.size();
        Batch batch;
        std::vector<double> values(idx.size() * stride);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            std::copy_n(data_->examples.data() + idx[k] * stride, stride, values.data() + k * stride);
            batch.labels.push_back(data_->labels[idx[k]]);
        }
        batch.inputs = Tensor(std::move(shape), std::move(values));
        batch.indices.assign(idx.begin(), idx.end());
        return batch;
    }

private:
    const Dataset* data_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
};

inline BatchSequence batches(const Dataset& data, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
    return BatchSequence(data, batch_size, shuffle_seed);
}

}  // namespace ticketlab

#endif  // TICKETLAB_DATA_HPP
