#include <benchmark/benchmark.h>

#include <vector>

#include "netfex/expr.hpp"
#include "netfex/rng.hpp"
#include "netfex/tape.hpp"

using namespace netfex;

namespace {

Expression random_expression(std::size_t depth, std::size_t d)
{
    auto tree = TreeTemplate::build(depth, d);
    auto ops = OperatorSet::standard();
    Rng rng(1);
    OperatorSequence seq(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        seq[i] = static_cast<std::uint16_t>(tree.node(i).kind == NodeKind::binary ? rng() % 3 : 2 + rng() % 9);
    }
    std::vector<double> theta(tree.n_params());
    for (auto& v : theta) v = uniform(rng, -0.5, 0.5);
    return Expression(tree, ops, seq, theta);
}

void BM_Evaluate(benchmark::State& state)
{
    auto e = random_expression(static_cast<std::size_t>(state.range(0)), 4);
    std::vector<double> x{0.1, -0.2, 0.3, 0.4};
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(e, x));
}

void BM_Gradient(benchmark::State& state)
{
    auto e = random_expression(static_cast<std::size_t>(state.range(0)), 4);
    std::vector<double> x{0.1, -0.2, 0.3, 0.4};
    std::vector<double> g(e.theta().size());
    for (auto _ : state) benchmark::DoNotOptimize(value_and_gradient(e, x, g));
}

void BM_Symbolic(benchmark::State& state)
{
    auto e = random_expression(static_cast<std::size_t>(state.range(0)), 2);
    for (auto _ : state) benchmark::DoNotOptimize(to_symbolic(e));
}

} // namespace

BENCHMARK(BM_Evaluate)->DenseRange(1, 4);
BENCHMARK(BM_Gradient)->DenseRange(1, 4);
BENCHMARK(BM_Symbolic)->DenseRange(1, 3);

BENCHMARK_MAIN();
