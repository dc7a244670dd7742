#include <benchmark/benchmark.h>

#include <vector>

#include "netfex/graph.hpp"
#include "netfex/loss.hpp"
#include "netfex/presets.hpp"

using namespace netfex;

namespace {

struct Fixture {
    DirectedGraph graph;
    DerivativeData data;
    Expression f;
    Expression g;

    explicit Fixture(std::size_t n)
    {
        graph = prune_to_directed(generate_ba(n, 3, 1), 0.5, 1);
        auto spec = DynamicsSpec::fhn();
        auto ts = integrate(spec, graph, random_initial_state(n, 2, 2), 0.01, 1.0);
        data = five_point_derivative(ts);
        SearchConfig cfg;
        auto ref = reference_structures(spec, cfg, true)[0];
        auto c = ref.applied_to(cfg);
        Rng rng(3);
        f = make_f_expression(c, 2, ref.e_f, initial_theta(TreeTemplate::build(c.depth_f, 2), rng));
        g = make_g_expression(c, 2, ref.e_g, initial_theta(TreeTemplate::build(c.depth_g, 4), rng));
    }
};

void run(benchmark::State& state, InteractionMode mode, bool batched)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    Fixture fx(n);
    LossContext ctx(fx.graph, fx.data, 0, Normalization::in_degree, {1, mode});
    LossEvaluator eval(ctx, fx.f, fx.g);
    Rng rng(4);
    std::vector<double> gf(fx.f.theta().size()), gg(fx.g.theta().size());
    for (auto _ : state) {
        auto plan = batched ? rbm_plan(ctx, 32, rng) : full_plan(ctx);
        benchmark::DoNotOptimize(eval.loss_and_gradient(plan, gf, gg));
    }
    state.SetComplexityN(state.range(0));
}

void BM_DenseFull(benchmark::State& s) { run(s, InteractionMode::dense, false); }
void BM_DenseRbm(benchmark::State& s) { run(s, InteractionMode::dense, true); }
void BM_SparseFull(benchmark::State& s) { run(s, InteractionMode::sparse, false); }

} // namespace

BENCHMARK(BM_DenseFull)->RangeMultiplier(2)->Range(64, 512)->Complexity();
BENCHMARK(BM_DenseRbm)->RangeMultiplier(2)->Range(64, 512)->Complexity();
BENCHMARK(BM_SparseFull)->RangeMultiplier(2)->Range(64, 512)->Complexity();

BENCHMARK_MAIN();
