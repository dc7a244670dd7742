#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "netfex/expr.hpp"

namespace netfex {

inline constexpr std::size_t n_unary_codes = 11;

/// Pointer table for one batch: features[var * n_unary_codes + code] points
/// at `batch` values of op(x_var). Entries for operators the expression
/// never applies at a leaf may be null.
using FeatureTable = std::span<const double* const>;

/// Reverse-mode evaluation of one expression over a batch of inputs.
/// Buffers are reused across calls; not thread-safe.
class BatchTape {
public:
    explicit BatchTape(const Expression& expr, std::size_t capacity = 512);

    const Expression& expression() const noexcept { return *expr_; }

    /// Evaluates every live node. Throws NumericError on a non-finite or
    /// overflowing node value.
    void forward(FeatureTable features, std::size_t batch);
    std::span<const double> output() const noexcept { return {value_.data(), batch_}; }

    /// grad[p] += sum_b seed[b] * d output_b / d theta_p, for the last forward.
    void backward(FeatureTable features, std::span<const double> seed, std::span<double> grad);

private:
    double* value(std::size_t n) { return value_.data() + n * capacity_; }
    double* inner(std::size_t n) { return inner_.data() + n * capacity_; }
    double* adjoint(std::size_t n) { return adjoint_.data() + n * capacity_; }
    void reserve(std::size_t batch);

    const Expression* expr_;
    std::size_t capacity_ = 0;
    std::size_t batch_ = 0;
    std::vector<double> value_;
    std::vector<double> inner_;
    std::vector<double> adjoint_;
};

/// op(x) for each op code over raw columns; owns storage.
class FeatureBlock {
public:
    /// raw[var] points at `batch` input values.
    FeatureBlock(std::span<const double* const> raw, std::size_t batch);
    FeatureTable table() const noexcept { return pointers_; }

private:
    std::vector<double> storage_;
    std::vector<const double*> pointers_;
};

void apply_column(UnaryOp op, const double* in, double* out, std::size_t n);

/// Value and gradient with respect to theta at a single input.
double value_and_gradient(const Expression& expr, std::span<const double> x, std::span<double> grad);

} // namespace netfex
