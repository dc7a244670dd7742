#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "netfex/error.hpp"
#include "netfex/expr.hpp"

using namespace netfex;

namespace {

using U = UnaryOp;
using B = BinaryOp;

Expression make(std::size_t depth, std::size_t d, std::vector<OpToken> tokens, std::vector<double> theta)
{
    auto tree = TreeTemplate::build(depth, d);
    auto ops = OperatorSet::standard();
    auto seq = make_sequence(tree, ops, tokens);
    return Expression(tree, ops, seq, std::move(theta));
}

// random tree drawing only polynomial-friendly operators
Expression random_polynomial(std::size_t depth, std::size_t d, std::mt19937_64& rng)
{
    auto tree = TreeTemplate::build(depth, d);
    auto ops = OperatorSet::standard();
    const std::vector<U> unary{U::zero, U::one, U::id, U::square, U::cube};
    OperatorSequence seq(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (tree.node(i).kind == NodeKind::binary) {
            seq[i] = static_cast<std::uint16_t>(rng() % 3);
        } else {
            seq[i] = ops.index_of(unary[rng() % unary.size()]);
        }
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> theta(tree.n_params());
    for (auto& v : theta) v = u(rng);
    return Expression(tree, ops, seq, theta);
}

} // namespace

TEST_CASE("template node counts")
{
    for (std::size_t L = 1; L <= 6; ++L) {
        auto t = TreeTemplate::build(L, 2);
        CHECK(t.n_unary() == (std::size_t{1} << L) - 1);
        CHECK(t.n_binary() == (std::size_t{1} << (L - 1)) - 1);
        const std::size_t leaves = std::size_t{1} << (L - 1);
        CHECK(t.n_params() == leaves * 3 + (t.n_unary() - leaves) * 2);
    }
    CHECK(TreeTemplate::build(1, 3).n_unary() == 1);
    CHECK(TreeTemplate::build(3, 1).n_unary() == 7);
    CHECK(TreeTemplate::build(3, 1).n_binary() == 3);
    CHECK(TreeTemplate::build(4, 1).n_unary() == 15);
    CHECK(TreeTemplate::build(4, 1).n_binary() == 7);
    CHECK_THROWS_AS(TreeTemplate::build(7, 1), ParameterError);
    CHECK_THROWS_AS(TreeTemplate::build(0, 1), ParameterError);

    // preorder: root unary, binary, left subtree, right subtree
    auto t = TreeTemplate::build(2, 1);
    CHECK(t.node(0).kind == NodeKind::unary);
    CHECK(t.node(1).kind == NodeKind::binary);
    CHECK(t.node(2).kind == NodeKind::leaf);
    CHECK(t.node(3).kind == NodeKind::leaf);
}

TEST_CASE("operator sets")
{
    auto ops = OperatorSet::standard();
    CHECK(ops.unary.size() == 11);
    CHECK(ops.binary.size() == 3);
    OperatorSet dup{{U::id, U::id}, {B::add}};
    CHECK_THROWS_AS(dup.validate(), ParameterError);
    OperatorSet empty{{}, {B::add}};
    CHECK_THROWS_AS(empty.validate(), ParameterError);
    CHECK(parse_unary("sigmoid") == U::sigmoid);
    CHECK(to_string(B::mul) == "mul");
    CHECK_THROWS_AS(parse_unary("log"), ParameterError);
}

TEST_CASE("evaluate examples")
{
    auto sin_leaf = make(1, 1, {U::sin}, {2.0, 1.0});
    CHECK(evaluate(sin_leaf, std::vector<double>{std::numbers::pi / 2}) == doctest::Approx(3.0).epsilon(1e-15));

    auto zero_leaf = make(1, 1, {U::zero}, {5.0, 0.7});
    CHECK(evaluate(zero_leaf, std::vector<double>{2.0}) == 0.7);

    auto one_leaf = make(1, 2, {U::one}, {0.5, 0.25, 0.1});
    CHECK(evaluate(one_leaf, std::vector<double>{9.0, -3.0}) == doctest::Approx(0.85));

    // (1.5 + 1.5)^2
    auto sq = make(2, 1, {U::square, B::add, U::id, U::id}, {1, 0, 1, 0, 1, 0});
    CHECK(evaluate(sq, std::vector<double>{1.5}) == doctest::Approx(9.0).epsilon(1e-15));

    CHECK_THROWS_AS(make(1, 2, {U::id}, {1.0, 2.0}), ParameterError);
}

TEST_CASE("overflow guard carries the node")
{
    auto e = make(2, 1, {U::exp, B::add, U::exp, U::id}, {1, 0, 1, 0, 1, 0});
    try {
        evaluate(e, std::vector<double>{100.0});
        FAIL("expected overflow");
    } catch (const NumericError& err) {
        CHECK(err.where() == 2);
    }
}

TEST_CASE("symbolic expansion")
{
    auto names = self_variable_names(2);
    CHECK(to_symbolic(make(1, 2, {U::id}, {1, 0, 0}), names) == TermMap{{"x1", 1.0}});

    auto cubic = make(2, 1, {U::id, B::add, U::id, U::cube}, {1, 0, 1, 0, -1, 0});
    CHECK(to_symbolic(cubic, self_variable_names(1)) == TermMap{{"x1", 1.0}, {"x1^3", -1.0}});

    auto sig = make(1, 2, {U::sigmoid}, {0, 0.3, 0});
    CHECK(to_symbolic(sig, names) == TermMap{{"sigmoid(x2)", 0.3}});

    auto sq = make(1, 1, {U::square}, {1, 1});
    CHECK(to_symbolic(sq, self_variable_names(1)) == TermMap{{"1", 1.0}, {"x1^2", 1.0}});

    // (x1 + 1)^2 = x1^2 + 2 x1 + 1
    auto shifted = make(2, 1, {U::square, B::add, U::id, U::one}, {1, 0, 1, 0, 1, 0});
    CHECK(to_symbolic(shifted, self_variable_names(1)) == TermMap{{"1", 1.0}, {"x1", 2.0}, {"x1^2", 1.0}});

    auto g = make(1, 4, {U::id}, {1, 0, -1, 0, 0});
    CHECK(to_symbolic(g, interaction_variable_names(2)) == TermMap{{"xi1", 1.0}, {"xj1", -1.0}});
}

TEST_CASE("symbolic round trip on polynomial trees")
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int expanded = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto e = random_polynomial(1 + trial % 3, 2, rng);
        auto poly = to_polynomial(e);
        // very large powers stay as atoms by design
        bool has_atom = false;
        for (const auto& [m, c] : poly.terms()) has_atom = has_atom || !m.atoms.empty();
        if (has_atom) continue;
        ++expanded;
        for (int k = 0; k < 5; ++k) {
            std::vector<double> x{u(rng), u(rng)};
            const double want = evaluate(e, x);
            const double got = poly.evaluate(x);
            CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
        }
    }
    CHECK(expanded >= 150);
}

TEST_CASE("filtering")
{
    std::vector<double> a{0.005, 0.9};
    filter_coefficients(a, 0.01);
    CHECK(a == std::vector<double>{0.0, 0.9});
    std::vector<double> b{-0.0099, 0.01};
    filter_coefficients(b, 0.01);
    CHECK(b == std::vector<double>{0.0, 0.01});
    std::vector<double> c{0.001, -0.3};
    filter_coefficients(c, 0.0);
    CHECK(c == std::vector<double>{0.001, -0.3});

    auto e = make(2, 1, {U::id, B::add, U::id, U::cube}, {1, 0.004, 0.5, 0.002, -1, 0});
    auto once = filter_coefficients(e, 0.01);
    auto twice = filter_coefficients(once, 0.01);
    CHECK(std::vector<double>(once.theta().begin(), once.theta().end()) ==
          std::vector<double>{1, 0, 0.5, 0, -1, 0});
    CHECK(std::vector<double>(twice.theta().begin(), twice.theta().end()) ==
          std::vector<double>(once.theta().begin(), once.theta().end()));
    CHECK(once.sequence() == e.sequence());
}

TEST_CASE("dead subtrees under constant operators")
{
    auto e = make(2, 1, {U::zero, B::mul, U::exp, U::sin}, {3, 0.25, 1, 0, 1, 0});
    auto live = e.live();
    CHECK(live[0]);
    CHECK_FALSE(live[1]);
    CHECK_FALSE(live[2]);
    CHECK(evaluate(e, std::vector<double>{100.0}) == 0.25);
}

TEST_CASE("json and strings")
{
    auto e = make(2, 2, {U::id, B::add, U::id, U::cube}, {1, 0, 1, 0.5, 0, -1, 0, 0});
    auto j = to_json(e, self_variable_names(2));
    auto back = expression_from_json(j);
    CHECK(back.sequence() == e.sequence());
    CHECK(std::vector<double>(back.theta().begin(), back.theta().end()) ==
          std::vector<double>(e.theta().begin(), e.theta().end()));
    CHECK(structure_string(e) == "id(add(id[x], cube[x]))");
    CHECK(j.at("structure") == "id(add(id[x], cube[x]))");
    CHECK(evaluate(e, std::vector<double>{0.3, 0.2}) == evaluate(back, std::vector<double>{0.3, 0.2}));
}

TEST_CASE("evaluation is bitwise pure")
{
    std::mt19937_64 rng(3);
    auto e = random_polynomial(3, 2, rng);
    std::vector<double> x{0.37, -0.81};
    const double a = evaluate(e, x);
    const double b = evaluate(e, x);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}
