#include "netfex/tape.hpp"

#include <algorithm>
#include <cmath>

#include "netfex/error.hpp"

namespace netfex {
namespace {

void check_column(const double* v, std::size_t n, std::size_t node)
{
    for (std::size_t b = 0; b < n; ++b) {
        if (!(std::abs(v[b]) <= overflow_guard)) {
            throw NumericError("non-finite or overflowing value at tree node " + std::to_string(node),
                               static_cast<std::ptrdiff_t>(node));
        }
    }
}

double sum_of(const double* v, std::size_t n)
{
    double s = 0.0;
    for (std::size_t b = 0; b < n; ++b) s += v[b];
    return s;
}

double dot_of(const double* a, const double* b, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

const double* feature_column(FeatureTable features, std::size_t var, UnaryOp op)
{
    const double* p = features[var * n_unary_codes + static_cast<std::size_t>(op)];
    if (p == nullptr) throw PreconditionError("missing leaf feature column for operator " + std::string(to_string(op)));
    return p;
}

} // namespace

void apply_column(UnaryOp op, const double* in, double* out, std::size_t n)
{
    switch (op) {
    case UnaryOp::zero: std::fill(out, out + n, 0.0); break;
    case UnaryOp::one: std::fill(out, out + n, 1.0); break;
    case UnaryOp::id: std::copy(in, in + n, out); break;
    case UnaryOp::square:
        for (std::size_t b = 0; b < n; ++b) out[b] = in[b] * in[b];
        break;
    case UnaryOp::cube:
        for (std::size_t b = 0; b < n; ++b) out[b] = in[b] * in[b] * in[b];
        break;
    case UnaryOp::pow4:
        for (std::size_t b = 0; b < n; ++b) {
            double x2 = in[b] * in[b];
            out[b] = x2 * x2;
        }
        break;
    default:
        for (std::size_t b = 0; b < n; ++b) out[b] = apply(op, in[b]);
        break;
    }
}

BatchTape::BatchTape(const Expression& expr, std::size_t capacity) : expr_(&expr)
{
    reserve(std::max<std::size_t>(capacity, 1));
}

void BatchTape::reserve(std::size_t batch)
{
    if (batch <= capacity_) return;
    capacity_ = batch;
    std::size_t n = expr_->tree().size() * capacity_;
    value_.assign(n, 0.0);
    inner_.assign(n, 0.0);
    adjoint_.assign(n, 0.0);
}

void BatchTape::forward(FeatureTable features, std::size_t batch)
{
    const auto& tree = expr_->tree();
    const std::size_t d = tree.input_dim();
    if (features.size() != d * n_unary_codes) throw ParameterError("feature table size does not match tree input");
    reserve(batch);
    batch_ = batch;
    auto theta = expr_->theta();
    const auto& live = expr_->live();

    // children follow parents in preorder, so evaluate back to front
    for (std::size_t n = tree.size(); n-- > 0;) {
        if (!live[n]) continue;
        const auto& node = tree.node(n);
        double* v = value(n);
        const double* a = theta.data() + node.param_offset;
        switch (node.kind) {
        case NodeKind::leaf: {
            auto op = expr_->unary_at(n);
            if (op == UnaryOp::zero) {
                std::fill(v, v + batch, a[d]);
            } else if (op == UnaryOp::one) {
                double c = a[d];
                for (std::size_t k = 0; k < d; ++k) c += a[k];
                std::fill(v, v + batch, c);
            } else {
                std::fill(v, v + batch, a[d]);
                for (std::size_t k = 0; k < d; ++k) {
                    if (a[k] == 0.0) continue;
                    const double* f = feature_column(features, k, op);
                    const double alpha = a[k];
                    for (std::size_t b = 0; b < batch; ++b) v[b] += alpha * f[b];
                }
            }
            break;
        }
        case NodeKind::unary: {
            auto op = expr_->unary_at(n);
            if (is_constant(op)) {
                std::fill(v, v + batch, a[0] * apply(op, 0.0) + a[1]);
            } else {
                double* z = inner(n);
                apply_column(op, value(node.left), z, batch);
                for (std::size_t b = 0; b < batch; ++b) v[b] = a[0] * z[b] + a[1];
            }
            break;
        }
        case NodeKind::binary: {
            const double* l = value(node.left);
            const double* r = value(node.right);
            switch (expr_->binary_at(n)) {
            case BinaryOp::add:
                for (std::size_t b = 0; b < batch; ++b) v[b] = l[b] + r[b];
                break;
            case BinaryOp::sub:
                for (std::size_t b = 0; b < batch; ++b) v[b] = l[b] - r[b];
                break;
            case BinaryOp::mul:
                for (std::size_t b = 0; b < batch; ++b) v[b] = l[b] * r[b];
                break;
            }
            break;
        }
        }
        check_column(v, batch, n);
    }
}

void BatchTape::backward(FeatureTable features, std::span<const double> seed, std::span<double> grad)
{
    const auto& tree = expr_->tree();
    const std::size_t d = tree.input_dim();
    const std::size_t batch = batch_;
    if (seed.size() != batch) throw ParameterError("seed length does not match batch");
    if (grad.size() != tree.n_params()) throw ParameterError("gradient length does not match theta");
    auto theta = expr_->theta();
    const auto& live = expr_->live();

    std::copy(seed.begin(), seed.end(), adjoint(0));
    // each node has a single parent, so adjoints are assigned, not accumulated
    for (std::size_t n = 0; n < tree.size(); ++n) {
        if (!live[n]) continue;
        const auto& node = tree.node(n);
        const double* g = adjoint(n);
        const double* a = theta.data() + node.param_offset;
        double* ga = grad.data() + node.param_offset;
        switch (node.kind) {
        case NodeKind::leaf: {
            auto op = expr_->unary_at(n);
            double total = sum_of(g, batch);
            ga[d] += total;
            if (op == UnaryOp::one) {
                for (std::size_t k = 0; k < d; ++k) ga[k] += total;
            } else if (op != UnaryOp::zero) {
                for (std::size_t k = 0; k < d; ++k) ga[k] += dot_of(g, feature_column(features, k, op), batch);
            }
            break;
        }
        case NodeKind::unary: {
            auto op = expr_->unary_at(n);
            double total = sum_of(g, batch);
            ga[1] += total;
            if (is_constant(op)) {
                ga[0] += total * apply(op, 0.0);
                break;
            }
            const double* z = inner(n);
            const double* c = value(node.left);
            double* gc = adjoint(node.left);
            ga[0] += dot_of(g, z, batch);
            const double alpha = a[0];
            switch (op) {
            case UnaryOp::id:
                for (std::size_t b = 0; b < batch; ++b) gc[b] = g[b] * alpha;
                break;
            case UnaryOp::square:
                for (std::size_t b = 0; b < batch; ++b) gc[b] = g[b] * alpha * 2.0 * c[b];
                break;
            case UnaryOp::cube:
                for (std::size_t b = 0; b < batch; ++b) gc[b] = g[b] * alpha * 3.0 * c[b] * c[b];
                break;
            default:
                for (std::size_t b = 0; b < batch; ++b) gc[b] = g[b] * alpha * derivative(op, c[b], z[b]);
                break;
            }
            break;
        }
        case NodeKind::binary: {
            double* gl = adjoint(node.left);
            double* gr = adjoint(node.right);
            switch (expr_->binary_at(n)) {
            case BinaryOp::add:
                std::copy(g, g + batch, gl);
                std::copy(g, g + batch, gr);
                break;
            case BinaryOp::sub:
                std::copy(g, g + batch, gl);
                for (std::size_t b = 0; b < batch; ++b) gr[b] = -g[b];
                break;
            case BinaryOp::mul: {
                const double* l = value(node.left);
                const double* r = value(node.right);
                for (std::size_t b = 0; b < batch; ++b) {
                    gl[b] = g[b] * r[b];
                    gr[b] = g[b] * l[b];
                }
                break;
            }
            }
            break;
        }
        }
    }
}

FeatureBlock::FeatureBlock(std::span<const double* const> raw, std::size_t batch)
    : storage_(raw.size() * n_unary_codes * batch), pointers_(raw.size() * n_unary_codes)
{
    for (std::size_t k = 0; k < raw.size(); ++k) {
        for (std::size_t c = 0; c < n_unary_codes; ++c) {
            double* out = storage_.data() + (k * n_unary_codes + c) * batch;
            apply_column(static_cast<UnaryOp>(c), raw[k], out, batch);
            pointers_[k * n_unary_codes + c] = out;
        }
    }
}

double value_and_gradient(const Expression& expr, std::span<const double> x, std::span<double> grad)
{
    if (x.size() != expr.input_dim()) throw ParameterError("input dimension mismatch");
    std::vector<const double*> raw;
    for (const auto& v : x) raw.push_back(&v);
    FeatureBlock block(raw, 1);
    BatchTape tape(expr, 1);
    tape.forward(block.table(), 1);
    double value = tape.output()[0];
    if (!grad.empty()) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const double one = 1.0;
        tape.backward(block.table(), {&one, 1}, grad);
    }
    return value;
}

} // namespace netfex
