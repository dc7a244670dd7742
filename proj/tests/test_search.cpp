#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "netfex/dynamics.hpp"
#include "netfex/error.hpp"
#include "netfex/graph.hpp"
#include "netfex/presets.hpp"
#include "netfex/search.hpp"

using namespace netfex;

namespace {

using U = UnaryOp;
using B = BinaryOp;

Candidate cand(std::uint16_t f, std::uint16_t g, double score)
{
    Candidate c;
    c.e_f = {f};
    c.e_g = {g};
    c.score = score;
    return c;
}

// dx/dt = -x at random states on a small graph
DerivativeData decay_data(const DirectedGraph& g, std::size_t n_times, std::uint64_t seed)
{
    const std::size_t n = g.n_nodes();
    TimeSeries states(n, 1, n_times, 0.01), derivs(n, 1, n_times, 0.01);
    Rng rng(seed);
    for (std::size_t t = 0; t < n_times; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double x = uniform(rng, -1.0, 1.0);
            states.at(i, 0, t) = x;
            derivs.at(i, 0, t) = -x;
        }
    }
    return {states, derivs};
}

struct FhnCase {
    DirectedGraph graph;
    DerivativeData data;
};

FhnCase fhn_case()
{
    auto g = prune_to_directed(generate_ba(30, 3, 1), 0.5, 1);
    auto ts = integrate(DynamicsSpec::fhn(), g, random_initial_state(30, 2, 1), 0.01, 20.0);
    return {g, five_point_derivative(ts)};
}

} // namespace

TEST_CASE("score formula")
{
    CHECK(score_from_loss(0.0) == 1.0);
    CHECK(score_from_loss(3.0) == 0.25);
    CHECK(score_from_loss(std::numeric_limits<double>::infinity()) == 0.0);
    CHECK(score_from_loss(std::nan("")) == 0.0);
}

TEST_CASE("pool keeps the best K")
{
    Pool pool(2);
    pool.insert(cand(1, 1, 0.5));
    pool.insert(cand(2, 1, 0.7));
    pool.insert(cand(3, 1, 0.9));
    REQUIRE(pool.size() == 2);
    CHECK(pool.candidates()[0].score == 0.9);
    CHECK(pool.candidates()[1].score == 0.7);
    CHECK_FALSE(pool.insert(cand(4, 1, 0.1)));
    CHECK_THROWS_AS(Pool(0), ParameterError);
}

TEST_CASE("pool deduplicates sequences")
{
    Pool pool(5);
    CHECK(pool.insert(cand(1, 2, 0.5)));
    CHECK_FALSE(pool.insert(cand(1, 2, 0.4)));
    CHECK(pool.size() == 1);
    CHECK(pool.insert(cand(1, 2, 0.8)));
    CHECK(pool.size() == 1);
    CHECK(pool.candidates()[0].score == 0.8);
    CHECK(pool.insert(cand(1, 3, 0.6)));
    CHECK(pool.size() == 2);
    for (std::size_t i = 1; i < pool.size(); ++i) CHECK(pool.candidates()[i - 1].score >= pool.candidates()[i].score);
}

TEST_CASE("select best")
{
    auto ft = [](double loss, std::size_t nz) {
        FineTuned f;
        f.loss = loss;
        f.nonzero = nz;
        return f;
    };
    CHECK(select_best({ft(0.3, 4)}) == 0);
    CHECK(select_best({ft(1e-3, 1), ft(1e-6, 9), ft(1e-2, 1)}) == 1);
    CHECK(select_best({ft(0.1, 8), ft(0.1, 3), ft(0.1, 5)}) == 1);
    CHECK(select_best({ft(0.1, 3), ft(0.1, 3)}) == 0);
    CHECK_THROWS_AS(select_best({}), ParameterError);
}

TEST_CASE("config validation")
{
    SearchConfig cfg;
    CHECK_NOTHROW(cfg.validate(30));
    CHECK_THROWS_AS(cfg.validate(10), ParameterError);
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(30), ParameterError);
    cfg = {};
    cfg.rbm_batch = 1;
    CHECK_THROWS_AS(cfg.validate(30), ParameterError);
    cfg = {};
    cfg.depth_f = 7;
    CHECK_THROWS_AS(cfg.validate(30), ParameterError);
}

TEST_CASE("initial theta draws alpha and zeroes beta")
{
    auto tree = TreeTemplate::build(3, 2);
    Rng rng(1);
    auto th = initial_theta(tree, rng);
    REQUIRE(th.size() == tree.n_params());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (tree.node(i).kind == NodeKind::binary) continue;
        const std::size_t off = tree.node(i).param_offset, cnt = tree.param_count(i);
        for (std::size_t q = 0; q + 1 < cnt; ++q) CHECK(std::abs(th[off + q]) <= 0.5);
        CHECK(th[off + cnt - 1] == 0.0);
    }
}

TEST_CASE("coarse tune at the truth")
{
    auto c = fhn_case();
    LossContext ctx(c.graph, c.data, 0, Normalization::in_degree);
    auto spec = DynamicsSpec::fhn();
    SearchConfig base;
    auto ref = reference_structures(spec, base, true)[0];
    auto cfg = ref.applied_to(base);
    cfg.coarse_steps = 0;
    cfg.bfgs_steps = 0;
    // true theta for id(add(id[x], cube[x])) and the linear coupling leaf
    std::vector<double> tf{1, 0, 1, -1, 0, -1, 0, 0};
    std::vector<double> tg{1, 0, -1, 0, 0};
    REQUIRE(tf.size() == TreeTemplate::build(cfg.depth_f, 2).n_params());
    REQUIRE(tg.size() == TreeTemplate::build(cfg.depth_g, 4).n_params());
    LossCounters counters;
    auto out = coarse_tune(ctx, cfg, ref.e_f, ref.e_g, {1, 2, 3}, counters, std::make_pair(tf, tg));
    CHECK(out.score > 0.999);
    CHECK(counters.full_calls == 0);
    CHECK(counters.rbm_calls == 1);
}

TEST_CASE("diverging expression scores zero")
{
    auto c = fhn_case();
    LossContext ctx(c.graph, c.data, 0, Normalization::in_degree);
    SearchConfig cfg;
    cfg.depth_f = 2;
    cfg.depth_g = 1;
    cfg.coarse_steps = 5;
    cfg.bfgs_steps = 1;
    auto ops = cfg.ops_f;
    auto e_f = make_sequence(TreeTemplate::build(2, 2), ops, std::vector<OpToken>{U::exp, B::add, U::exp, U::exp});
    std::vector<double> tf{50, 0, 80, 80, 0, 80, 80, 0};
    std::vector<double> tg{0, 0, 0, 0, 0};
    LossCounters counters;
    auto out = coarse_tune(ctx, cfg, e_f, {ops.index_of(U::id)}, {1, 2, 3}, counters, std::make_pair(tf, tg));
    CHECK(out.score == 0.0);
}

TEST_CASE("fine tune with a large threshold zeroes everything")
{
    auto c = fhn_case();
    LossContext ctx(c.graph, c.data, 0, Normalization::in_degree);
    SearchConfig cfg;
    cfg.depth_f = 2;
    cfg.depth_g = 1;
    cfg.fine_tune_steps = 50;
    cfg.fine_tune_repeats = 2;
    cfg.tau = 1e6;
    auto ops = cfg.ops_f;
    Candidate cd;
    cd.e_f = make_sequence(TreeTemplate::build(2, 2), ops, std::vector<OpToken>{U::id, B::add, U::id, U::cube});
    cd.e_g = {ops.index_of(U::id)};
    cd.theta_f = {1, 0, 1, -1, 0, -1, 0, 0};
    cd.theta_g = {1, 0, -1, 0, 0};
    LossCounters counters;
    auto out = fine_tune(ctx, cfg, cd, 5, counters);
    CHECK(out.nonzero == 0);
    double second_moment = 0.0;
    for (std::size_t i = 0; i < ctx.n_nodes(); ++i) {
        for (std::size_t t = 0; t < ctx.n_times(); ++t) {
            const double y = ctx.target(static_cast<NodeId>(i))[t];
            second_moment += y * y;
        }
    }
    second_moment /= static_cast<double>(ctx.n_nodes() * ctx.n_times());
    CHECK(out.loss == doctest::Approx(second_moment).epsilon(1e-12));
    CHECK(counters.rbm_calls == 0);
    CHECK(counters.full_calls == 2 * 50 + 1);

    cfg.fine_tune_nodes = 31;
    CHECK_THROWS_AS(fine_tune(ctx, cfg, cd, 5, counters), ParameterError);
}

TEST_CASE("fine tune with one repeat over all nodes is a plain full fit")
{
    auto c = fhn_case();
    LossContext ctx(c.graph, c.data, 0, Normalization::in_degree);
    SearchConfig cfg;
    cfg.depth_f = 2;
    cfg.depth_g = 1;
    cfg.fine_tune_steps = 200;
    cfg.fine_tune_repeats = 1;
    cfg.fine_tune_nodes = 30;
    cfg.tau = 0.0;
    auto ops = cfg.ops_f;
    Candidate cd;
    cd.e_f = make_sequence(TreeTemplate::build(2, 2), ops, std::vector<OpToken>{U::id, B::add, U::id, U::cube});
    cd.e_g = {ops.index_of(U::id)};
    cd.theta_f = {0.5, 0, 0.5, -0.5, 0, -0.5, 0, 0};
    cd.theta_g = {0.5, 0, -0.5, 0, 0};
    LossCounters counters;
    auto a = fine_tune(ctx, cfg, cd, 5, counters);
    auto b = fine_tune(ctx, cfg, cd, 77, counters);
    CHECK(a.theta_f == b.theta_f);
    CHECK(a.theta_g == b.theta_g);
    CHECK(a.loss == b.loss);
}

TEST_CASE("toy identity search")
{
    auto g = prune_to_directed(generate_ba(20, 2, 3), 0.5, 3);
    auto data = decay_data(g, 40, 4);
    LossContext ctx(g, data, 0, Normalization::in_degree);
    SearchConfig cfg;
    cfg.depth_f = 1;
    cfg.depth_g = 1;
    cfg.iterations = 50;
    cfg.coarse_steps = 20;
    cfg.bfgs_steps = 2;
    cfg.fine_tune_steps = 100;
    cfg.fine_tune_nodes = 10;
    int hits = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        DimensionSearch search(ctx, cfg, seed);
        while (!search.coarse_done()) search.run_iteration(1);
        if (search.pool().candidates().front().score > 0.99) ++hits;
    }
    CHECK(hits >= 2);
}

TEST_CASE("search is deterministic and thread independent")
{
    auto g = prune_to_directed(generate_ba(20, 2, 5), 0.5, 5);
    auto data = decay_data(g, 30, 6);
    LossContext ctx(g, data, 0, Normalization::in_degree);
    SearchConfig cfg;
    cfg.depth_f = 2;
    cfg.depth_g = 1;
    cfg.iterations = 3;
    cfg.batch = 4;
    cfg.coarse_steps = 5;
    cfg.bfgs_steps = 1;
    cfg.fine_tune_steps = 20;
    cfg.fine_tune_repeats = 2;
    cfg.fine_tune_nodes = 8;
    auto run = [&](std::size_t threads) {
        DimensionSearch s(ctx, cfg, 42);
        while (!s.coarse_done()) s.run_iteration(threads);
        auto res = s.finish(threads);
        nlohmann::json j = s.checkpoint();
        j["best"] = res.best;
        j["tuned"] = res.tuned[res.best].theta_f;
        return j.dump();
    };
    const auto a = run(1);
    CHECK(a == run(1));
    CHECK(a == run(3));
}

TEST_CASE("coarse stage uses only random batches and fine stage only full loss")
{
    auto g = prune_to_directed(generate_ba(40, 2, 7), 0.5, 7);
    auto data = decay_data(g, 20, 8);
    LossContext ctx(g, data, 0, Normalization::none, {1, InteractionMode::dense});
    SearchConfig cfg;
    cfg.depth_f = 1;
    cfg.depth_g = 1;
    cfg.iterations = 2;
    cfg.batch = 3;
    cfg.coarse_steps = 4;
    cfg.bfgs_steps = 1;
    cfg.rbm_batch = 8;
    cfg.fine_tune_steps = 5;
    cfg.fine_tune_repeats = 1;
    cfg.fine_tune_nodes = 40;
    DimensionSearch s(ctx, cfg, 3);
    while (!s.coarse_done()) s.run_iteration(1);
    CHECK(s.counters().full_calls == 0);
    CHECK(s.counters().rbm_calls > 0);
    // dense in-batch pairs stay well under the all-pairs count
    CHECK(s.counters().rbm_pairs <= s.counters().rbm_calls * 40 * 7);
    auto res = s.finish(1);
    CHECK(res.fine.rbm_calls == 0);
    CHECK(res.fine.full_calls > 0);
    CHECK(res.fine.full_pairs >= res.fine.full_calls * 40 * 39 / 2);
}

TEST_CASE("checkpoint restore resumes identically")
{
    auto g = prune_to_directed(generate_ba(20, 2, 9), 0.5, 9);
    auto data = decay_data(g, 20, 9);
    LossContext ctx(g, data, 0, Normalization::in_degree);
    SearchConfig cfg;
    cfg.depth_f = 2;
    cfg.depth_g = 1;
    cfg.iterations = 4;
    cfg.batch = 3;
    cfg.coarse_steps = 5;
    cfg.bfgs_steps = 1;
    cfg.fine_tune_nodes = 10;
    DimensionSearch full(ctx, cfg, 8);
    while (!full.coarse_done()) full.run_iteration(1);

    DimensionSearch first(ctx, cfg, 8);
    first.run_iteration(1);
    first.run_iteration(1);
    const auto saved = first.checkpoint().dump();
    DimensionSearch resumed(ctx, cfg, 8);
    resumed.restore(nlohmann::json::parse(saved));
    CHECK(resumed.next_iteration() == 2);
    while (!resumed.coarse_done()) resumed.run_iteration(1);
    CHECK(resumed.checkpoint().dump() == full.checkpoint().dump());
}
