#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "netfex/symbolic.hpp"

namespace netfex {

enum class UnaryOp : std::uint8_t { zero, one, id, square, cube, pow4, exp, sin, cos, tanh, sigmoid };
enum class BinaryOp : std::uint8_t { add, sub, mul };

std::string_view to_string(UnaryOp op);
std::string_view to_string(BinaryOp op);
UnaryOp parse_unary(std::string_view name);
BinaryOp parse_binary(std::string_view name);

double apply(UnaryOp op, double x);
/// d/dx op(x), given x and the already computed value op(x).
double derivative(UnaryOp op, double x, double value);
double apply(BinaryOp op, double a, double b);

inline bool is_constant(UnaryOp op) { return op == UnaryOp::zero || op == UnaryOp::one; }

/// Ordered operator dictionaries. The order fixes the controller's output layout.
struct OperatorSet {
    std::vector<UnaryOp> unary;
    std::vector<BinaryOp> binary;

    /// {0, 1, Id, ^2, ^3, ^4, exp, sin, cos, tanh, sigmoid} and {+, -, *}.
    static OperatorSet standard();

    /// Throws ParameterError on empty or duplicated lists.
    void validate() const;

    std::uint16_t index_of(UnaryOp op) const;
    std::uint16_t index_of(BinaryOp op) const;

    friend bool operator==(const OperatorSet&, const OperatorSet&) = default;
};

enum class NodeKind : std::uint8_t { leaf, unary, binary };

struct TemplateNode {
    NodeKind kind = NodeKind::leaf;
    int left = -1;  // child of a unary node, left operand of a binary node
    int right = -1; // right operand of a binary node
    std::size_t param_offset = 0; // first theta slot of a unary/leaf node
};

/// Fixed binary-tree layout in preorder. template(1) is a single unary leaf;
/// template(L) is a unary root over a binary node over two template(L-1).
class TreeTemplate {
public:
    static constexpr std::size_t max_depth = 6;

    TreeTemplate() = default;
    /// Throws ParameterError for depth 0 or depth > max_depth.
    static TreeTemplate build(std::size_t depth, std::size_t input_dim);

    std::size_t depth() const noexcept { return depth_; }
    std::size_t input_dim() const noexcept { return input_dim_; }
    std::span<const TemplateNode> nodes() const noexcept { return nodes_; }
    const TemplateNode& node(std::size_t i) const { return nodes_[i]; }
    std::size_t size() const noexcept { return nodes_.size(); }
    std::size_t n_unary() const noexcept { return n_unary_; } // leaves included
    std::size_t n_binary() const noexcept { return nodes_.size() - n_unary_; }
    std::size_t n_params() const noexcept { return n_params_; }
    /// theta slots owned by node i: input_dim + 1 for leaves, 2 for interior unary.
    std::size_t param_count(std::size_t i) const;

    friend bool operator==(const TreeTemplate& a, const TreeTemplate& b)
    {
        return a.depth_ == b.depth_ && a.input_dim_ == b.input_dim_;
    }

private:
    std::size_t depth_ = 0;
    std::size_t input_dim_ = 0;
    std::vector<TemplateNode> nodes_;
    std::size_t n_unary_ = 0;
    std::size_t n_params_ = 0;
};

/// Preorder operator indices, one per template node; unary nodes index
/// OperatorSet::unary and binary nodes index OperatorSet::binary.
using OperatorSequence = std::vector<std::uint16_t>;

/// u(x; tree, e, theta). Leaf value is sum_k alpha_k u(x_k) + beta; an
/// interior unary node yields alpha u(child) + beta; binary nodes combine
/// their operands. Constant operators ignore their inputs.
class Expression {
public:
    Expression() = default;
    Expression(TreeTemplate tree, OperatorSet ops, OperatorSequence sequence, std::vector<double> theta);

    const TreeTemplate& tree() const noexcept { return tree_; }
    const OperatorSet& operators() const noexcept { return ops_; }
    const OperatorSequence& sequence() const noexcept { return sequence_; }
    std::span<const double> theta() const noexcept { return theta_; }
    std::size_t input_dim() const noexcept { return tree_.input_dim(); }

    UnaryOp unary_at(std::size_t node) const { return static_cast<UnaryOp>(codes_[node]); }
    BinaryOp binary_at(std::size_t node) const { return static_cast<BinaryOp>(codes_[node]); }

    Expression with_theta(std::vector<double> theta) const;
    void set_theta(std::span<const double> theta);

    /// Nodes whose value can influence the root (children of constant
    /// operators are dead).
    const std::vector<char>& live() const noexcept { return live_; }

private:
    TreeTemplate tree_;
    OperatorSet ops_;
    OperatorSequence sequence_;
    std::vector<double> theta_;
    std::vector<std::uint8_t> codes_;
    std::vector<char> live_;
};

inline constexpr double overflow_guard = 1e30;

/// Throws NumericError (carrying the node index) on a non-finite or
/// > 1e30 intermediate.
double evaluate(const Expression& expr, std::span<const double> x);

/// x1..xd for a self-dynamics tree.
std::vector<std::string> self_variable_names(std::size_t d);
/// xi1..xid, xj1..xjd for an interaction tree over (x_i, x_j).
std::vector<std::string> interaction_variable_names(std::size_t d);

/// Symbolic expansion. Polynomial operators expand; transcendental
/// compositions become atoms like "sin(0.5*x1 + 0.1)".
Polynomial to_polynomial(const Expression& expr, std::span<const std::string> names = {});
TermMap to_symbolic(const Expression& expr, std::span<const std::string> names = {});

/// Nested operator form, e.g. "id(add(id[x], cube[x]))".
std::string structure_string(const Expression& expr);

/// Zero every theta entry with |theta_i| < tau.
Expression filter_coefficients(const Expression& expr, double tau);
void filter_coefficients(std::span<double> theta, double tau);

nlohmann::json to_json(const Expression& expr, std::span<const std::string> names = {});
Expression expression_from_json(const nlohmann::json& j);

/// Builds a sequence from operator values laid out in preorder
/// (binary nodes take BinaryOp, unary nodes UnaryOp).
struct OpToken {
    bool binary = false;
    std::uint8_t code = 0;
    OpToken(UnaryOp u) : binary(false), code(static_cast<std::uint8_t>(u)) {}
    OpToken(BinaryOp b) : binary(true), code(static_cast<std::uint8_t>(b)) {}
};
OperatorSequence make_sequence(const TreeTemplate& tree, const OperatorSet& ops, std::span<const OpToken> tokens);

} // namespace netfex
