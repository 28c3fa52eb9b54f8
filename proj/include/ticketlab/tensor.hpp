// Copyright 2026 The ticketlab Authors
// Licensed under the Apache License, Version 2.0

#ifndef TICKETLAB_TENSOR_HPP
#define TICKETLAB_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace ticketlab {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

/// Dense row-major array of doubles with an optional gradient buffer of the
/// same length.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, bool requires_grad = false)
        : shape_(std::move(shape)), values_(checked_size(shape_), 0.0) {
        if (requires_grad) grad_.assign(values_.size(), 0.0);
    }

    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
        : shape_(std::move(shape)), values_(std::move(values)) {
        if (checked_size(shape_) != values_.size()) {
            throw DimensionError("tensor of shape " + shape_string(shape_) + " given " +
                                 std::to_string(values_.size()) + " values");
        }
        if (requires_grad) grad_.assign(values_.size(), 0.0);
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return values_.size(); }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    bool requires_grad() const noexcept { return !grad_.empty(); }
    void set_requires_grad(bool on) {
        if (on) {
            grad_.assign(values_.size(), 0.0);
        } else {
            grad_.clear();
        }
    }
    std::vector<double>& grad() noexcept { return grad_; }
    const std::vector<double>& grad() const noexcept { return grad_; }
    void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    /// Same values under a different shape of equal size.
    void reshape(Shape shape) {
        if (shape_size(shape) != values_.size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        shape_ = std::move(shape);
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    static std::size_t checked_size(const Shape& shape) {
        if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
        for (std::size_t d : shape) {
            if (d == 0) throw DimensionError("tensor shape " + shape_string(shape) + " has a zero dimension");
        }
        return shape_size(shape);
    }

    Shape shape_;
    std::vector<double> values_;
    std::vector<double> grad_;
};

}  // namespace ticketlab

#endif  // TICKETLAB_TENSOR_HPP
