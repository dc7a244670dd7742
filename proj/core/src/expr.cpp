#include "netfex/expr.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "netfex/error.hpp"

namespace netfex {
namespace {

constexpr std::array<std::string_view, 11> unary_names{"0",   "1",   "id",  "square", "cube",   "pow4",
                                                       "exp", "sin", "cos", "tanh",   "sigmoid"};
constexpr std::array<std::string_view, 3> binary_names{"add", "sub", "mul"};

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

void check_value(double v, std::size_t node)
{
    if (!(std::abs(v) <= overflow_guard)) {
        throw NumericError("non-finite or overflowing value at tree node " + std::to_string(node),
                           static_cast<std::ptrdiff_t>(node));
    }
}

} // namespace

std::string_view to_string(UnaryOp op)
{
    return unary_names[static_cast<std::size_t>(op)];
}

std::string_view to_string(BinaryOp op)
{
    return binary_names[static_cast<std::size_t>(op)];
}

UnaryOp parse_unary(std::string_view name)
{
    for (std::size_t i = 0; i < unary_names.size(); ++i) {
        if (unary_names[i] == name) return static_cast<UnaryOp>(i);
    }
    throw ParameterError("unknown unary operator '" + std::string(name) + "'");
}

BinaryOp parse_binary(std::string_view name)
{
    for (std::size_t i = 0; i < binary_names.size(); ++i) {
        if (binary_names[i] == name) return static_cast<BinaryOp>(i);
    }
    throw ParameterError("unknown binary operator '" + std::string(name) + "'");
}

double apply(UnaryOp op, double x)
{
    switch (op) {
    case UnaryOp::zero: return 0.0;
    case UnaryOp::one: return 1.0;
    case UnaryOp::id: return x;
    case UnaryOp::square: return x * x;
    case UnaryOp::cube: return x * x * x;
    case UnaryOp::pow4: {
        double x2 = x * x;
        return x2 * x2;
    }
    case UnaryOp::exp: return std::exp(x);
    case UnaryOp::sin: return std::sin(x);
    case UnaryOp::cos: return std::cos(x);
    case UnaryOp::tanh: return std::tanh(x);
    case UnaryOp::sigmoid: return sigmoid(x);
    }
    return 0.0;
}

double derivative(UnaryOp op, double x, double value)
{
    switch (op) {
    case UnaryOp::zero:
    case UnaryOp::one: return 0.0;
    case UnaryOp::id: return 1.0;
    case UnaryOp::square: return 2.0 * x;
    case UnaryOp::cube: return 3.0 * x * x;
    case UnaryOp::pow4: return 4.0 * x * x * x;
    case UnaryOp::exp: return value;
    case UnaryOp::sin: return std::cos(x);
    case UnaryOp::cos: return -std::sin(x);
    case UnaryOp::tanh: return 1.0 - value * value;
    case UnaryOp::sigmoid: return value * (1.0 - value);
    }
    return 0.0;
}

double apply(BinaryOp op, double a, double b)
{
    switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
    }
    return 0.0;
}

OperatorSet OperatorSet::standard()
{
    return OperatorSet{{UnaryOp::zero, UnaryOp::one, UnaryOp::id, UnaryOp::square, UnaryOp::cube, UnaryOp::pow4,
                        UnaryOp::exp, UnaryOp::sin, UnaryOp::cos, UnaryOp::tanh, UnaryOp::sigmoid},
                       {BinaryOp::add, BinaryOp::sub, BinaryOp::mul}};
}

void OperatorSet::validate() const
{
    if (unary.empty() || binary.empty()) throw ParameterError("operator sets must be non-empty");
    auto has_dup = [](auto v) {
        std::sort(v.begin(), v.end());
        return std::adjacent_find(v.begin(), v.end()) != v.end();
    };
    if (has_dup(unary) || has_dup(binary)) throw ParameterError("operator sets must not contain duplicates");
}

std::uint16_t OperatorSet::index_of(UnaryOp op) const
{
    auto it = std::find(unary.begin(), unary.end(), op);
    if (it == unary.end()) throw ParameterError("unary operator '" + std::string(to_string(op)) + "' not in set");
    return static_cast<std::uint16_t>(it - unary.begin());
}

std::uint16_t OperatorSet::index_of(BinaryOp op) const
{
    auto it = std::find(binary.begin(), binary.end(), op);
    if (it == binary.end()) throw ParameterError("binary operator '" + std::string(to_string(op)) + "' not in set");
    return static_cast<std::uint16_t>(it - binary.begin());
}

TreeTemplate TreeTemplate::build(std::size_t depth, std::size_t input_dim)
{
    if (depth == 0) throw ParameterError("tree depth must be >= 1");
    if (depth > max_depth) throw ParameterError("tree depth " + std::to_string(depth) + " exceeds size guard");
    if (input_dim == 0) throw ParameterError("tree input dimension must be >= 1");

    TreeTemplate t;
    t.depth_ = depth;
    t.input_dim_ = input_dim;
    std::function<int(std::size_t)> append = [&](std::size_t level) -> int {
        int idx = static_cast<int>(t.nodes_.size());
        if (level == 1) {
            t.nodes_.push_back({NodeKind::leaf});
            return idx;
        }
        t.nodes_.push_back({NodeKind::unary});
        int b = static_cast<int>(t.nodes_.size());
        t.nodes_.push_back({NodeKind::binary});
        t.nodes_[idx].left = b;
        int l = append(level - 1);
        int r = append(level - 1);
        t.nodes_[b].left = l;
        t.nodes_[b].right = r;
        return idx;
    };
    append(depth);

    for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
        auto& n = t.nodes_[i];
        if (n.kind == NodeKind::binary) continue;
        ++t.n_unary_;
        n.param_offset = t.n_params_;
        t.n_params_ += t.param_count(i);
    }
    return t;
}

std::size_t TreeTemplate::param_count(std::size_t i) const
{
    switch (nodes_[i].kind) {
    case NodeKind::leaf: return input_dim_ + 1;
    case NodeKind::unary: return 2;
    case NodeKind::binary: return 0;
    }
    return 0;
}

Expression::Expression(TreeTemplate tree, OperatorSet ops, OperatorSequence sequence, std::vector<double> theta)
    : tree_(std::move(tree)), ops_(std::move(ops)), sequence_(std::move(sequence)), theta_(std::move(theta))
{
    ops_.validate();
    if (sequence_.size() != tree_.size()) {
        throw ParameterError("operator sequence length " + std::to_string(sequence_.size()) +
                             " does not match tree size " + std::to_string(tree_.size()));
    }
    if (theta_.size() != tree_.n_params()) {
        throw ParameterError("theta length " + std::to_string(theta_.size()) + " does not match tree parameter count " +
                             std::to_string(tree_.n_params()));
    }
    codes_.resize(tree_.size());
    for (std::size_t i = 0; i < tree_.size(); ++i) {
        bool binary = tree_.node(i).kind == NodeKind::binary;
        std::size_t limit = binary ? ops_.binary.size() : ops_.unary.size();
        if (sequence_[i] >= limit) {
            throw ParameterError("operator index " + std::to_string(sequence_[i]) + " invalid at node " +
                                 std::to_string(i));
        }
        codes_[i] = binary ? static_cast<std::uint8_t>(ops_.binary[sequence_[i]])
                           : static_cast<std::uint8_t>(ops_.unary[sequence_[i]]);
    }
    live_.assign(tree_.size(), 0);
    std::function<void(int)> mark = [&](int n) {
        live_[n] = 1;
        const auto& node = tree_.node(n);
        if (node.kind == NodeKind::unary) {
            if (!is_constant(unary_at(n))) mark(node.left);
        } else if (node.kind == NodeKind::binary) {
            mark(node.left);
            mark(node.right);
        }
    };
    mark(0);
}

Expression Expression::with_theta(std::vector<double> theta) const
{
    Expression e = *this;
    if (theta.size() != theta_.size()) throw ParameterError("theta length mismatch");
    e.theta_ = std::move(theta);
    return e;
}

void Expression::set_theta(std::span<const double> theta)
{
    if (theta.size() != theta_.size()) throw ParameterError("theta length mismatch");
    std::copy(theta.begin(), theta.end(), theta_.begin());
}

double evaluate(const Expression& expr, std::span<const double> x)
{
    const auto& tree = expr.tree();
    if (x.size() != tree.input_dim()) throw ParameterError("input dimension mismatch in evaluate");
    auto theta = expr.theta();
    std::function<double(int)> eval = [&](int n) -> double {
        const auto& node = tree.node(n);
        double v = 0.0;
        switch (node.kind) {
        case NodeKind::leaf: {
            auto op = expr.unary_at(n);
            const double* a = theta.data() + node.param_offset;
            v = a[tree.input_dim()];
            if (op == UnaryOp::one) {
                for (std::size_t k = 0; k < tree.input_dim(); ++k) v += a[k];
            } else if (op != UnaryOp::zero) {
                for (std::size_t k = 0; k < tree.input_dim(); ++k) v += a[k] * apply(op, x[k]);
            }
            break;
        }
        case NodeKind::unary: {
            auto op = expr.unary_at(n);
            const double* a = theta.data() + node.param_offset;
            double z = is_constant(op) ? apply(op, 0.0) : apply(op, eval(node.left));
            v = a[0] * z + a[1];
            break;
        }
        case NodeKind::binary: v = apply(expr.binary_at(n), eval(node.left), eval(node.right)); break;
        }
        check_value(v, static_cast<std::size_t>(n));
        return v;
    };
    return eval(0);
}

std::vector<std::string> self_variable_names(std::size_t d)
{
    std::vector<std::string> names;
    for (std::size_t k = 0; k < d; ++k) names.push_back("x" + std::to_string(k + 1));
    return names;
}

std::vector<std::string> interaction_variable_names(std::size_t d)
{
    std::vector<std::string> names;
    for (std::size_t k = 0; k < d; ++k) names.push_back("xi" + std::to_string(k + 1));
    for (std::size_t k = 0; k < d; ++k) names.push_back("xj" + std::to_string(k + 1));
    return names;
}

Polynomial to_polynomial(const Expression& expr, std::span<const std::string> names_in)
{
    const auto& tree = expr.tree();
    const std::size_t d = tree.input_dim();
    std::vector<std::string> names(names_in.begin(), names_in.end());
    if (names.empty()) names = self_variable_names(d);
    if (names.size() != d) throw ParameterError("variable name count does not match input dimension");
    auto theta = expr.theta();
    constexpr double max_terms = 4096.0;

    auto wrap_atom = [&](UnaryOp op, const Polynomial& inner) {
        return Polynomial::atom(d, std::string(to_string(op)) + "(" + inner.render(names) + ")");
    };

    std::function<Polynomial(int)> build = [&](int n) -> Polynomial {
        const auto& node = tree.node(n);
        const double* a = theta.data() + node.param_offset;
        if (node.kind == NodeKind::binary) {
            Polynomial l = build(node.left);
            Polynomial r = build(node.right);
            switch (expr.binary_at(n)) {
            case BinaryOp::add: l += r; break;
            case BinaryOp::sub: l -= r; break;
            case BinaryOp::mul:
                if (static_cast<double>(l.size()) * static_cast<double>(r.size()) > max_terms) {
                    l = Polynomial::atom(d, "(" + l.render(names) + ")*(" + r.render(names) + ")");
                } else {
                    l = l * r;
                }
                break;
            }
            l.drop_zeros();
            return l;
        }

        auto op = expr.unary_at(n);
        if (node.kind == NodeKind::leaf) {
            Polynomial p = Polynomial::constant(d, a[d]);
            for (std::size_t k = 0; k < d; ++k) {
                if (a[k] == 0.0) continue;
                Polynomial term(d);
                switch (op) {
                case UnaryOp::zero: continue;
                case UnaryOp::one: term = Polynomial::constant(d, 1.0); break;
                case UnaryOp::id:
                case UnaryOp::square:
                case UnaryOp::cube:
                case UnaryOp::pow4: {
                    Monomial m{std::vector<std::uint16_t>(d, 0), {}};
                    m.powers[k] = op == UnaryOp::id ? 1 : op == UnaryOp::square ? 2 : op == UnaryOp::cube ? 3 : 4;
                    term.add_term(m, 1.0);
                    break;
                }
                default: term = Polynomial::atom(d, std::string(to_string(op)) + "(" + names[k] + ")"); break;
                }
                p += term.scale(a[k]);
            }
            p.drop_zeros();
            return p;
        }

        // interior unary: alpha * op(child) + beta
        Polynomial z(d);
        if (op == UnaryOp::zero) {
            z = Polynomial(d);
        } else if (op == UnaryOp::one) {
            z = Polynomial::constant(d, 1.0);
        } else {
            Polynomial c = build(node.left);
            bool constant_child = c.size() == 0 || (c.size() == 1 && c.terms().begin()->first.is_constant());
            if (constant_child) {
                double cv = c.size() == 0 ? 0.0 : c.terms().begin()->second;
                z = Polynomial::constant(d, apply(op, cv));
            } else {
                switch (op) {
                case UnaryOp::id: z = std::move(c); break;
                case UnaryOp::square:
                case UnaryOp::cube:
                case UnaryOp::pow4: {
                    unsigned k = op == UnaryOp::square ? 2 : op == UnaryOp::cube ? 3 : 4;
                    z = expansion_size(c.size(), k) > max_terms ? wrap_atom(op, c) : c.pow(k);
                    break;
                }
                default: z = wrap_atom(op, c); break;
                }
            }
        }
        z.scale(a[0]);
        z.add_constant(a[1]);
        z.drop_zeros();
        return z;
    };
    return build(0);
}

TermMap to_symbolic(const Expression& expr, std::span<const std::string> names)
{
    std::vector<std::string> resolved(names.begin(), names.end());
    if (resolved.empty()) resolved = self_variable_names(expr.input_dim());
    return to_polynomial(expr, resolved).to_terms(resolved);
}

std::string structure_string(const Expression& expr)
{
    const auto& tree = expr.tree();
    std::function<std::string(int)> walk = [&](int n) -> std::string {
        const auto& node = tree.node(n);
        switch (node.kind) {
        case NodeKind::leaf: return std::string(to_string(expr.unary_at(n))) + "[x]";
        case NodeKind::unary: return std::string(to_string(expr.unary_at(n))) + "(" + walk(node.left) + ")";
        case NodeKind::binary:
            return std::string(to_string(expr.binary_at(n))) + "(" + walk(node.left) + ", " + walk(node.right) + ")";
        }
        return {};
    };
    return walk(0);
}

void filter_coefficients(std::span<double> theta, double tau)
{
    if (!(tau >= 0.0)) throw ParameterError("filter threshold must be >= 0");
    for (auto& t : theta) {
        if (std::abs(t) < tau) t = 0.0;
    }
}

Expression filter_coefficients(const Expression& expr, double tau)
{
    std::vector<double> theta(expr.theta().begin(), expr.theta().end());
    filter_coefficients(theta, tau);
    return expr.with_theta(std::move(theta));
}

nlohmann::json to_json(const Expression& expr, std::span<const std::string> names)
{
    nlohmann::json j;
    j["depth"] = expr.tree().depth();
    j["input_dim"] = expr.input_dim();
    nlohmann::json unary = nlohmann::json::array(), binary = nlohmann::json::array(), ops = nlohmann::json::array();
    for (auto u : expr.operators().unary) unary.push_back(std::string(to_string(u)));
    for (auto b : expr.operators().binary) binary.push_back(std::string(to_string(b)));
    for (std::size_t i = 0; i < expr.tree().size(); ++i) {
        bool is_bin = expr.tree().node(i).kind == NodeKind::binary;
        ops.push_back(std::string(is_bin ? to_string(expr.binary_at(i)) : to_string(expr.unary_at(i))));
    }
    j["unary_set"] = unary;
    j["binary_set"] = binary;
    j["operators"] = ops;
    j["theta"] = std::vector<double>(expr.theta().begin(), expr.theta().end());
    std::vector<std::string> resolved(names.begin(), names.end());
    if (resolved.empty()) resolved = self_variable_names(expr.input_dim());
    j["structure"] = structure_string(expr);
    j["formula"] = to_polynomial(expr, resolved).render(resolved);
    return j;
}

Expression expression_from_json(const nlohmann::json& j)
{
    try {
        auto tree = TreeTemplate::build(j.at("depth").get<std::size_t>(), j.at("input_dim").get<std::size_t>());
        OperatorSet ops;
        for (const auto& u : j.at("unary_set")) ops.unary.push_back(parse_unary(u.get<std::string>()));
        for (const auto& b : j.at("binary_set")) ops.binary.push_back(parse_binary(b.get<std::string>()));
        ops.validate();
        const auto& names = j.at("operators");
        if (names.size() != tree.size()) throw ParameterError("operator list length does not match tree");
        OperatorSequence seq(tree.size());
        for (std::size_t i = 0; i < tree.size(); ++i) {
            auto name = names[i].get<std::string>();
            seq[i] = tree.node(i).kind == NodeKind::binary ? ops.index_of(parse_binary(name))
                                                           : ops.index_of(parse_unary(name));
        }
        return Expression(std::move(tree), std::move(ops), std::move(seq), j.at("theta").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("malformed expression JSON: ") + e.what());
    }
}

OperatorSequence make_sequence(const TreeTemplate& tree, const OperatorSet& ops, std::span<const OpToken> tokens)
{
    if (tokens.size() != tree.size()) throw ParameterError("token count does not match tree size");
    OperatorSequence seq(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        bool binary = tree.node(i).kind == NodeKind::binary;
        if (binary != tokens[i].binary) throw ParameterError("operator arity mismatch at node " + std::to_string(i));
        seq[i] = binary ? ops.index_of(static_cast<BinaryOp>(tokens[i].code))
                        : ops.index_of(static_cast<UnaryOp>(tokens[i].code));
    }
    return seq;
}

} // namespace netfex
