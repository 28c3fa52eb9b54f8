// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0
//
// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape owns every intermediate tensor produced while it records. Operands
// that live elsewhere (network parameters, input batches) are referenced, so
// they must outlive the tape's use of them. backward() replays the recorded
// vector-Jacobian products in exact reverse order and accumulates into every
// gradient-requiring tensor it reaches.

#ifndef TICKETLAB_AUTODIFF_HPP
#define TICKETLAB_AUTODIFF_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace ticketlab {

namespace kernels {

// C[MxN] += A[MxK] * B[KxN]
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
    for (std::size_t i = 0; i < M; ++i) {
        double* c = C + i * N;
        const double* a = A + i * K;
        for (std::size_t p = 0; p < K; ++p) {
            const double av = a[p];
            if (av == 0.0) continue;
            const double* b = B + p * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[MxN] += A[MxK] * B[NxK]^T
inline void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
    for (std::size_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        for (std::size_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            double acc = 0.0;
            for (std::size_t p = 0; p < K; ++p) acc += a[p] * b[p];
            C[i * N + j] += acc;
        }
    }
}

// C[MxN] += A[KxM]^T * B[KxN]
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C) {
    for (std::size_t p = 0; p < K; ++p) {
        const double* a = A + p * M;
        const double* b = B + p * N;
        for (std::size_t i = 0; i < M; ++i) {
            const double av = a[i];
            if (av == 0.0) continue;
            double* c = C + i * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t kernel_h, kernel_w;
    std::size_t stride, padding;
    std::size_t out_h, out_w;

    std::size_t patch() const { return channels * kernel_h * kernel_w; }
    std::size_t positions() const { return out_h * out_w; }
};

// Unfolds one C x H x W image into a [C*kh*kw x out_h*out_w] column matrix.
inline void im2col(const ConvGeometry& g, const double* image, double* cols) {
    const std::size_t P = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                double* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * P;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
                        const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<long>(g.height) &&
                                            iw < static_cast<long>(g.width);
                        row[oh * g.out_w + ow] =
                            inside ? image[(c * g.height + static_cast<std::size_t>(ih)) * g.width +
                                           static_cast<std::size_t>(iw)]
                                   : 0.0;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column gradients back onto the image.
inline void col2im(const ConvGeometry& g, const double* cols, double* image) {
    const std::size_t P = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const double* row = cols + ((c * g.kernel_h + ki) * g.kernel_w + kj) * P;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
                    if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
                        if (iw < 0 || iw >= static_cast<long>(g.width)) continue;
                        image[(c * g.height + static_cast<std::size_t>(ih)) * g.width + static_cast<std::size_t>(iw)] +=
                            row[oh * g.out_w + ow];
                    }
                }
            }
        }
    }
}

}  // namespace kernels

/// Output spatial size of a convolution; throws ConfigError when it would be
/// non-positive.
inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ConfigError("conv2d stride must be at least 1");
    if (kernel == 0 || kernel > in + 2 * padding) {
        throw ConfigError("conv2d kernel " + std::to_string(kernel) + " does not fit input " + std::to_string(in) +
                          " with padding " + std::to_string(padding));
    }
    return (in + 2 * padding - kernel) / stride + 1;
}

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// With recording off the tape evaluates operations but keeps no
    /// backward records and allocates no gradients.
    void set_recording(bool on) noexcept { recording_ = on; }
    bool recording() const noexcept { return recording_; }

    std::size_t records() const noexcept { return records_.size(); }

    /// Drops every intermediate tensor and record.
    void clear() {
        records_.clear();
        nodes_.clear();
    }

    /// Moves a tensor onto the tape as a constant input.
    Tensor& constant(Tensor value) {
        value.set_requires_grad(false);
        return nodes_.emplace_back(std::move(value));
    }

    Tensor& matmul(Tensor& a, Tensor& b) {
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
            throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
        }
        const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
        Tensor& out = make({M, N}, a, b);
        kernels::gemm_nn(M, N, K, a.data(), b.data(), out.data());
        if (out.requires_grad()) {
            record([&a, &b, &out, M, N, K] {
                if (a.requires_grad()) kernels::gemm_nt(M, K, N, out.grad().data(), b.data(), a.grad().data());
                if (b.requires_grad()) kernels::gemm_tn(K, N, M, a.data(), out.grad().data(), b.grad().data());
            });
        }
        return out;
    }

    /// Adds bias[c] to every element whose dimension-1 index is c. Works for
    /// [N x C] dense activations and [N x C x H x W] feature maps.
    Tensor& add_bias(Tensor& x, Tensor& bias) {
        if (x.rank() < 2 || bias.size() != x.dim(1)) {
            throw DimensionError("bias of shape " + shape_string(bias.shape()) + " does not match " +
                                 shape_string(x.shape()));
        }
        const std::size_t N = x.dim(0), C = x.dim(1), inner = x.size() / (N * C);
        Tensor& out = make(x.shape(), x, bias);
        for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t base = (n * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) out[base + i] = x[base + i] + bias[c];
            }
        }
        if (out.requires_grad()) {
            record([&x, &bias, &out, N, C, inner] {
                if (x.requires_grad()) {
                    for (std::size_t i = 0; i < out.size(); ++i) x.grad()[i] += out.grad()[i];
                }
                if (bias.requires_grad()) {
                    for (std::size_t n = 0; n < N; ++n) {
                        for (std::size_t c = 0; c < C; ++c) {
                            const std::size_t base = (n * C + c) * inner;
                            double acc = 0.0;
                            for (std::size_t i = 0; i < inner; ++i) acc += out.grad()[base + i];
                            bias.grad()[c] += acc;
                        }
                    }
                }
            });
        }
        return out;
    }

    /// Cross-correlation of [N x C x H x W] input with [F x C x kh x kw]
    /// kernels, zero padding on all sides.
    Tensor& conv2d(Tensor& input, Tensor& kernel, std::size_t stride, std::size_t padding) {
        if (input.rank() != 4 || kernel.rank() != 4 || input.dim(1) != kernel.dim(1)) {
            throw DimensionError("conv2d shape mismatch: input " + shape_string(input.shape()) + ", kernel " +
                                 shape_string(kernel.shape()));
        }
        kernels::ConvGeometry g{};
        g.channels = input.dim(1);
        g.height = input.dim(2);
        g.width = input.dim(3);
        g.kernel_h = kernel.dim(2);
        g.kernel_w = kernel.dim(3);
        g.stride = stride;
        g.padding = padding;
        g.out_h = conv_output_size(g.height, g.kernel_h, stride, padding);
        g.out_w = conv_output_size(g.width, g.kernel_w, stride, padding);

        const std::size_t N = input.dim(0), F = kernel.dim(0);
        const std::size_t in_stride = g.channels * g.height * g.width;
        const std::size_t out_stride = F * g.positions();
        Tensor& out = make({N, F, g.out_h, g.out_w}, input, kernel);

        // Column matrices are kept for the backward pass only when needed.
        const bool keep = out.requires_grad();
        auto cols = std::make_shared<std::vector<double>>((keep ? N : 1) * g.patch() * g.positions());
        for (std::size_t n = 0; n < N; ++n) {
            double* c = cols->data() + (keep ? n : 0) * g.patch() * g.positions();
            kernels::im2col(g, input.data() + n * in_stride, c);
            kernels::gemm_nn(F, g.positions(), g.patch(), kernel.data(), c, out.data() + n * out_stride);
        }
        if (out.requires_grad()) {
            record([&input, &kernel, &out, g, N, F, in_stride, out_stride, cols] {
                std::vector<double> dcols(g.patch() * g.positions());
                for (std::size_t n = 0; n < N; ++n) {
                    const double* dout = out.grad().data() + n * out_stride;
                    const double* c = cols->data() + n * g.patch() * g.positions();
                    if (kernel.requires_grad()) {
                        kernels::gemm_nt(F, g.patch(), g.positions(), dout, c, kernel.grad().data());
                    }
                    if (input.requires_grad()) {
                        std::fill(dcols.begin(), dcols.end(), 0.0);
                        kernels::gemm_tn(g.patch(), g.positions(), F, kernel.data(), dout, dcols.data());
                        kernels::col2im(g, dcols.data(), input.grad().data() + n * in_stride);
                    }
                }
            });
        }
        return out;
    }

    /// max(0, x); the subgradient at exactly 0 is 0.
    Tensor& relu(Tensor& x) {
        Tensor& out = make(x.shape(), x);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
        if (out.requires_grad()) {
            record([&x, &out] {
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (x[i] > 0.0) x.grad()[i] += out.grad()[i];
                }
            });
        }
        return out;
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    /// Ties route the gradient to the first maximum in row-major order.
    Tensor& maxpool2x2(Tensor& x) {
        if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
            throw DimensionError("maxpool2x2 needs an N x C x H x W input with H, W >= 2, got " +
                                 shape_string(x.shape()));
        }
        const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        const std::size_t OH = H / 2, OW = W / 2;
        Tensor& out = make({N, C, OH, OW}, x);
        std::vector<std::size_t> argmax(out.size());
        for (std::size_t nc = 0; nc < N * C; ++nc) {
            for (std::size_t oh = 0; oh < OH; ++oh) {
                for (std::size_t ow = 0; ow < OW; ++ow) {
                    std::size_t best = (nc * H + 2 * oh) * W + 2 * ow;
                    for (std::size_t di = 0; di < 2; ++di) {
                        for (std::size_t dj = 0; dj < 2; ++dj) {
                            const std::size_t idx = (nc * H + 2 * oh + di) * W + 2 * ow + dj;
                            if (x[idx] > x[best]) best = idx;
                        }
                    }
                    const std::size_t o = (nc * OH + oh) * OW + ow;
                    out[o] = x[best];
                    argmax[o] = best;
                }
            }
        }
        if (out.requires_grad()) {
            record([&x, &out, argmax = std::move(argmax)] {
                for (std::size_t o = 0; o < out.size(); ++o) x.grad()[argmax[o]] += out.grad()[o];
            });
        }
        return out;
    }

    /// Collapses every dimension after the first.
    Tensor& flatten(Tensor& x) {
        Tensor& out = make({x.dim(0), x.size() / x.dim(0)}, x);
        std::copy(x.values().begin(), x.values().end(), out.values().begin());
        if (out.requires_grad()) {
            record([&x, &out] {
                for (std::size_t i = 0; i < x.size(); ++i) x.grad()[i] += out.grad()[i];
            });
        }
        return out;
    }

    /// Elementwise product of equally shaped tensors.
    Tensor& mul(Tensor& a, Tensor& b) {
        if (a.shape() != b.shape()) {
            throw DimensionError("mul shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
        }
        Tensor& out = make(a.shape(), a, b);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
        if (out.requires_grad()) {
            record([&a, &b, &out] {
                for (std::size_t i = 0; i < out.size(); ++i) {
                    if (a.requires_grad()) a.grad()[i] += out.grad()[i] * b[i];
                    if (b.requires_grad()) b.grad()[i] += out.grad()[i] * a[i];
                }
            });
        }
        return out;
    }

    Tensor& scale(Tensor& x, double factor) {
        Tensor& out = make(x.shape(), x);
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = factor * x[i];
        if (out.requires_grad()) {
            record([&x, &out, factor] {
                for (std::size_t i = 0; i < x.size(); ++i) x.grad()[i] += factor * out.grad()[i];
            });
        }
        return out;
    }

    /// Sum of all elements as a 1-element tensor.
    Tensor& sum(Tensor& x) {
        Tensor& out = make({1}, x);
        double acc = 0.0;
        for (double v : x.values()) acc += v;
        out[0] = acc;
        if (out.requires_grad()) {
            record([&x, &out] {
                for (double& g : x.grad()) g += out.grad()[0];
            });
        }
        return out;
    }

    /// Mean over the batch of -log softmax(logits)[label], max-subtracted.
    Tensor& softmax_cross_entropy(Tensor& logits, std::span<const int> labels) {
        if (logits.rank() != 2) {
            throw DimensionError("softmax_cross_entropy expects N x C logits, got " + shape_string(logits.shape()));
        }
        const std::size_t N = logits.dim(0), C = logits.dim(1);
        if (labels.size() != N) {
            throw InputError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(N));
        }
        for (std::size_t n = 0; n < N; ++n) {
            if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= C) {
                throw InputError("label " + std::to_string(labels[n]) + " at position " + std::to_string(n) +
                                 " is outside [0, " + std::to_string(C) + ")");
            }
        }
        Tensor& out = make({1}, logits);
        std::vector<double> probs(N * C);
        double total = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
            const double* row = logits.data() + n * C;
            const double peak = *std::max_element(row, row + C);
            double z = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                probs[n * C + c] = std::exp(row[c] - peak);
                z += probs[n * C + c];
            }
            for (std::size_t c = 0; c < C; ++c) probs[n * C + c] /= z;
            total += std::log(z) + peak - row[labels[n]];
        }
        out[0] = total / static_cast<double>(N);
        if (out.requires_grad()) {
            std::vector<int> owned(labels.begin(), labels.end());
            record([&logits, &out, N, C, probs = std::move(probs), owned = std::move(owned)] {
                const double scale = out.grad()[0] / static_cast<double>(N);
                for (std::size_t n = 0; n < N; ++n) {
                    for (std::size_t c = 0; c < C; ++c) {
                        const double onehot = static_cast<std::size_t>(owned[n]) == c ? 1.0 : 0.0;
                        logits.grad()[n * C + c] += scale * (probs[n * C + c] - onehot);
                    }
                }
            });
        }
        return out;
    }

    /// Accumulates d(loss)/d(t) into every gradient-requiring tensor t that
    /// the recorded operations reach. Intermediate gradients are reset first,
    /// so repeated calls add to leaf gradients exactly once each.
    void backward(Tensor& loss) {
        if (loss.size() != 1) {
            throw UsageError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
        }
        if (!loss.requires_grad()) return;
        for (Tensor& node : nodes_) node.zero_grad();
        loss.grad()[0] += 1.0;
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
    }

private:
    Tensor& make(Shape shape, const Tensor& a) { return make(std::move(shape), a.requires_grad()); }
    Tensor& make(Shape shape, const Tensor& a, const Tensor& b) {
        return make(std::move(shape), a.requires_grad() || b.requires_grad());
    }
    Tensor& make(Shape shape, bool needs_grad) {
        return nodes_.emplace_back(std::move(shape), recording_ && needs_grad);
    }

    void record(std::function<void()> vjp) { records_.push_back(std::move(vjp)); }

    std::deque<Tensor> nodes_;
    std::vector<std::function<void()>> records_;
    bool recording_ = true;
};

/// A scalar-valued function built on a tape from one input tensor.
using ScalarFunction = std::function<Tensor&(Tape&, Tensor&)>;

/// Compares the autodiff gradient of f at x against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) and returns the largest
/// relative error |a - n| / max(|a|, |n|, 1e-8) over all coordinates.
///
/// x must require gradients. Its gradient buffer is left holding the
/// autodiff gradient; its values are restored exactly.
inline double finite_diff_check(const ScalarFunction& f, Tensor& x, double eps) {
    if (!(eps > 0.0)) throw UsageError("finite_diff_check needs eps > 0");
    if (!x.requires_grad()) x.set_requires_grad(true);
    x.zero_grad();
    {
        Tape tape;
        tape.backward(f(tape, x));
    }
    auto evaluate = [&] {
        Tape tape;
        tape.set_recording(false);
        return f(tape, x)[0];
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + eps;
        const double up = evaluate();
        x[i] = saved - eps;
        const double down = evaluate();
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = x.grad()[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    return worst;
}

}  // namespace ticketlab

#endif  // TICKETLAB_AUTODIFF_HPP
