#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "netfex/dynamics.hpp"
#include "netfex/error.hpp"
#include "netfex/graph.hpp"
#include "netfex/loss.hpp"
#include "netfex/rng.hpp"

using namespace netfex;

namespace {

using U = UnaryOp;
using B = BinaryOp;

Expression fhn_f()
{
    // x1 - x2 - x1^3
    auto tree = TreeTemplate::build(2, 2);
    auto ops = OperatorSet::standard();
    auto seq = make_sequence(tree, ops, std::vector<OpToken>{U::id, B::sub, U::id, U::cube});
    return Expression(tree, ops, seq, {1, 0, 1, -1, 0, 1, 0, 0});
}

Expression fhn_g()
{
    // xi1 - xj1, summed and divided by in-degree
    auto tree = TreeTemplate::build(1, 4);
    auto ops = OperatorSet::standard();
    return Expression(tree, ops, {ops.index_of(U::id)}, {1, 0, -1, 0, 0});
}

Expression zero_g(std::size_t d)
{
    auto tree = TreeTemplate::build(1, 2 * d);
    auto ops = OperatorSet::standard();
    return Expression(tree, ops, {ops.index_of(U::zero)}, std::vector<double>(2 * d + 1, 0.0));
}

DirectedGraph test_graph(std::size_t n, std::uint64_t seed)
{
    return prune_to_directed(generate_ba(n, 3, seed), 0.5, seed);
}

// states drawn at random, derivatives from the exact right-hand side
DerivativeData exact_data(const DynamicsSpec& spec, const DirectedGraph& g, std::size_t n_times, std::uint64_t seed)
{
    const std::size_t n = g.n_nodes(), d = spec.dim;
    TimeSeries states(n, d, n_times, 0.01), derivs(n, d, n_times, 0.01);
    Rng rng(seed);
    for (std::size_t t = 0; t < n_times; ++t) {
        std::vector<double> x(n * d);
        for (auto& v : x) v = uniform(rng, -1.0, 1.0);
        auto dx = rhs(spec, g, x);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                states.at(i, k, t) = x[i * d + k];
                derivs.at(i, k, t) = dx[i * d + k];
            }
        }
    }
    return {states, derivs};
}

// direct transcription of the loss definition
double oracle_loss(const DirectedGraph& g, const DerivativeData& data, std::size_t k, Normalization norm,
                   const Expression& f, const Expression& ge)
{
    const std::size_t n = g.n_nodes(), d = data.states.dim(), T = data.states.n_times();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> xi(d);
            for (std::size_t q = 0; q < d; ++q) xi[q] = data.states.at(i, q, t);
            double inter = 0.0;
            for (auto j : g.in_neighbors(i)) {
                std::vector<double> p(2 * d);
                for (std::size_t q = 0; q < d; ++q) {
                    p[q] = xi[q];
                    p[d + q] = data.states.at(j, q, t);
                }
                inter += evaluate(ge, p);
            }
            const auto kin = g.in_degree(i);
            double w = 1.0;
            if (norm == Normalization::in_degree) w = kin == 0 ? 0.0 : 1.0 / static_cast<double>(kin);
            const double r = evaluate(f, xi) + w * inter - data.derivatives.at(i, k, t);
            sum += r * r;
        }
    }
    return sum / static_cast<double>(n * T);
}

} // namespace

TEST_CASE("zero residual at the truth")
{
    auto g = test_graph(20, 1);
    auto spec = DynamicsSpec::fhn();
    auto data = exact_data(spec, g, 30, 2);
    LossContext ctx(g, data, 0, Normalization::in_degree);
    CHECK(full_loss(ctx, fhn_f(), fhn_g()) < 1e-20);
}

TEST_CASE("five point data at the truth")
{
    auto g = test_graph(20, 3);
    auto spec = DynamicsSpec::fhn();
    auto ts = integrate(spec, g, random_initial_state(20, 2, 5), 0.01, 20.0);
    LossContext ctx(g, five_point_derivative(ts), 0, Normalization::in_degree);
    CHECK(full_loss(ctx, fhn_f(), fhn_g()) < 1e-8);
}

TEST_CASE("loss agrees with the direct definition")
{
    auto g = test_graph(15, 4);
    auto spec = DynamicsSpec::fhn();
    auto data = exact_data(spec, g, 12, 6);
    auto f = fhn_f().with_theta({0.8, 0.1, 0.9, -1.2, 0.05, 1.1, 0.3, -0.1});
    auto ge = fhn_g().with_theta({0.4, 0.2, -0.7, 0.1, 0.3});
    for (auto norm : {Normalization::none, Normalization::in_degree}) {
        LossContext ctx(g, data, 0, norm);
        CHECK(full_loss(ctx, f, ge) == doctest::Approx(oracle_loss(g, data, 0, norm, f, ge)).epsilon(1e-12));
    }
    LossContext ctx1(g, data, 1, Normalization::none);
    CHECK(full_loss(ctx1, f, ge) == doctest::Approx(oracle_loss(g, data, 1, Normalization::none, f, ge)).epsilon(1e-12));
}

TEST_CASE("empty graph reduces to the self term")
{
    DirectedGraph empty(10, {});
    auto data = exact_data(DynamicsSpec::fhn(), empty, 9, 8);
    LossContext ctx(empty, data, 0, Normalization::none);
    auto f = fhn_f().with_theta({0.5, 0.0, 1, 0, 0, 1, 0, 0});
    auto g_any = fhn_g().with_theta({3, 1, 4, 1, 5});
    CHECK(full_loss(ctx, f, g_any) == full_loss(ctx, f, zero_g(2)));
    double sum = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        for (std::size_t t = 0; t < 9; ++t) {
            std::vector<double> x{data.states.at(i, 0, t), data.states.at(i, 1, t)};
            const double r = evaluate(f, x) - data.derivatives.at(i, 0, t);
            sum += r * r;
        }
    }
    CHECK(full_loss(ctx, f, g_any) == doctest::Approx(sum / 90.0).epsilon(1e-12));
}

TEST_CASE("rbm with a single batch matches full")
{
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 10 + static_cast<std::size_t>(trial);
        auto g = test_graph(n, trial);
        auto data = exact_data(DynamicsSpec::fhn(), g, 7, trial + 100);
        LossContext ctx(g, data, 0, Normalization::in_degree);
        auto f = fhn_f().with_theta({uniform(rng, -1, 1), 0, 1, -1, 0, 1, 0, 0});
        auto ge = fhn_g().with_theta({uniform(rng, -1, 1), 0.1, -0.3, 0.2, 0.05});
        const double full = full_loss(ctx, f, ge);
        const double rbm = rbm_loss(ctx, f, ge, n, trial);
        CHECK(std::abs(rbm - full) <= 1e-10 * full);
    }
}

TEST_CASE("rbm pair counts")
{
    std::vector<Arc> arcs;
    for (NodeId i = 0; i < 6; ++i) {
        for (NodeId j = 0; j < 6; ++j) {
            if (i != j) arcs.push_back({i, j});
        }
    }
    DirectedGraph complete(6, arcs);
    auto data = exact_data(DynamicsSpec::fhn(), complete, 5, 1);
    LossContext ctx(complete, data, 0, Normalization::none);
    CHECK(full_plan(ctx).pair_count() == 30);
    Rng rng(4);
    CHECK(rbm_plan(ctx, 3, rng).pair_count() == 12);
    CHECK_THROWS_AS(rbm_plan(ctx, 1, rng), ParameterError);
    CHECK_THROWS_AS(rbm_loss(ctx, fhn_f(), fhn_g(), 1, 0), ParameterError);

    auto g = test_graph(50, 2);
    auto d2 = exact_data(DynamicsSpec::fhn(), g, 5, 2);
    for (auto mode : {InteractionMode::sparse, InteractionMode::dense}) {
        LossContext c2(g, d2, 0, Normalization::none, {1, mode});
        for (std::size_t p : {2, 7, 32}) {
            const std::size_t batches = (50 + p - 1) / p;
            CHECK(rbm_plan(c2, p, rng).pair_count() <= batches * p * p);
        }
    }
    LossContext dense(g, d2, 0, Normalization::none, {1, InteractionMode::dense});
    CHECK(full_plan(dense).pair_count() == 50 * 49);
}

TEST_CASE("rbm without interaction equals full")
{
    auto g = test_graph(30, 9);
    auto data = exact_data(DynamicsSpec::fhn(), g, 6, 9);
    LossContext ctx(g, data, 0, Normalization::in_degree);
    const double full = full_loss(ctx, fhn_f(), zero_g(2));
    for (int s = 0; s < 200; ++s) CHECK(rbm_loss(ctx, fhn_f(), zero_g(2), 8, s) == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("rbm rescale multiplies the restricted sum")
{
    DirectedGraph pair(4, {{0, 1}, {2, 3}, {1, 0}, {3, 2}});
    auto data = exact_data(DynamicsSpec::fhn(), pair, 3, 3);
    LossContext ctx(pair, data, 0, Normalization::none);
    Rng a(5), b(5);
    auto plain = rbm_plan(ctx, 2, a, false);
    auto scaled = rbm_plan(ctx, 2, b, true);
    REQUIRE(plain.pair_count() == scaled.pair_count());
    for (std::size_t q = 0; q < plain.pair_count(); ++q) CHECK(scaled.weights[q] == doctest::Approx(3.0 * plain.weights[q]));
}

TEST_CASE("permutation invariance")
{
    auto g = test_graph(12, 5);
    auto data = exact_data(DynamicsSpec::fhn(), g, 4, 5);
    std::vector<NodeId> perm(12);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    std::mt19937_64 rng(3);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Arc> arcs;
    for (const auto& a : g.arcs()) arcs.push_back({perm[a.src], perm[a.dst]});
    DirectedGraph pg(12, arcs);
    DerivativeData pd{data.states, data.derivatives};
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t t = 0; t < 4; ++t) {
                pd.states.at(perm[i], k, t) = data.states.at(i, k, t);
                pd.derivatives.at(perm[i], k, t) = data.derivatives.at(i, k, t);
            }
        }
    }
    auto f = fhn_f().with_theta({0.7, 0.2, 1, -0.5, 0.1, 0.9, 0, 0.3});
    auto ge = fhn_g().with_theta({0.2, 0.1, -0.9, 0.4, 0.2});
    LossContext c1(g, data, 0, Normalization::in_degree), c2(pg, pd, 0, Normalization::in_degree);
    CHECK(full_loss(c1, f, ge) == doctest::Approx(full_loss(c2, f, ge)).epsilon(1e-12));
}

TEST_CASE("numeric failure gives the infinite sentinel")
{
    auto g = test_graph(10, 1);
    auto data = exact_data(DynamicsSpec::fhn(), g, 4, 1);
    LossContext ctx(g, data, 0, Normalization::none);
    auto tree = TreeTemplate::build(2, 2);
    auto ops = OperatorSet::standard();
    auto seq = make_sequence(tree, ops, std::vector<OpToken>{U::exp, B::add, U::exp, U::id});
    Expression blow(tree, ops, seq, {1, 0, 200, 0, 0, 1, 0, 0});
    CHECK(std::isinf(full_loss(ctx, blow, fhn_g())));
    CHECK(std::isinf(rbm_loss(ctx, blow, fhn_g(), 4, 1)));
    CHECK(full_loss(ctx, fhn_f(), fhn_g()) >= 0.0);
}

TEST_CASE("loss gradient matches finite differences")
{
    auto g = test_graph(12, 7);
    auto data = exact_data(DynamicsSpec::fhn(), g, 700, 7);
    LossContext ctx(g, data, 0, Normalization::in_degree, {3, InteractionMode::sparse});
    auto f = fhn_f().with_theta({0.7, 0.2, 1, -0.5, 0.1, 0.9, 0, 0.3});
    auto ge = fhn_g().with_theta({0.2, 0.1, -0.9, 0.4, 0.2});
    LossEvaluator eval(ctx, f, ge);
    auto plan = full_plan(ctx);
    std::vector<double> gf(f.theta().size()), gg(ge.theta().size());
    eval.loss_and_gradient(plan, gf, gg);
    auto fd = [&](Expression& e, std::size_t q) {
        std::vector<double> th(e.theta().begin(), e.theta().end());
        const double h = 1e-6;
        th[q] += h;
        e.set_theta(th);
        const double up = eval.loss(plan);
        th[q] -= 2 * h;
        e.set_theta(th);
        const double dn = eval.loss(plan);
        th[q] += h;
        e.set_theta(th);
        return (up - dn) / (2 * h);
    };
    for (std::size_t q = 0; q < gf.size(); ++q) CHECK(gf[q] == doctest::Approx(fd(f, q)).epsilon(1e-6));
    for (std::size_t q = 0; q < gg.size(); ++q) CHECK(gg[q] == doctest::Approx(fd(ge, q)).epsilon(1e-6));
}

TEST_CASE("subset plans")
{
    DirectedGraph g(5, {{0, 1}, {2, 1}, {3, 1}, {1, 4}, {4, 0}});
    auto data = exact_data(DynamicsSpec::fhn(), g, 3, 2);
    LossContext ctx(g, data, 0, Normalization::in_degree);
    std::vector<NodeId> nodes{1, 2};
    auto full = subset_plan(ctx, nodes, true);
    CHECK(full.targets == std::vector<NodeId>{1, 2});
    CHECK(full.pair_count() == 3);
    auto induced = subset_plan(ctx, nodes, false);
    CHECK(induced.pair_count() == 1);
    CHECK(induced.sources == std::vector<NodeId>{2});
    CHECK(induced.weights[0] == 1.0);
}

TEST_CASE("time stride subsamples")
{
    auto g = test_graph(10, 2);
    auto data = exact_data(DynamicsSpec::fhn(), g, 10, 2);
    LossContext c3(g, data, 0, Normalization::none, {3});
    CHECK(c3.n_times() == 4);
    CHECK(c3.target(0)[1] == data.derivatives.at(0, 0, 3));
}
