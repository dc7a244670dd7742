#include "netfex/presets.hpp"

#include <functional>

#include "netfex/error.hpp"
#include "netfex/rng.hpp"

namespace netfex {

DirectedGraph build_graph(const GraphRecipe& recipe, std::uint64_t seed)
{
    if (recipe.type == "sf") {
        auto g = generate_ba(recipe.n, recipe.m, stream_seed(seed, "graph", {0}));
        return prune_to_directed(g, recipe.remove_fraction, stream_seed(seed, "graph", {1}));
    }
    if (recipe.type == "er") return generate_er(recipe.n, recipe.p, stream_seed(seed, "graph", {0}));
    if (recipe.type == "file") return read_edge_list(recipe.path);
    throw ParameterError("unknown graph type '" + recipe.type + "'");
}

Preset preset(const std::string& name)
{
    Preset p;
    p.name = name;
    if (name == "hr") {
        p.kind = DynamicsKind::hr;
        p.T = 500.0;
        p.depth = 4;
        p.time_stride = 100;
    } else if (name == "fhn") {
        p.kind = DynamicsKind::fhn;
        p.T = 300.0;
        p.depth = 3;
        p.time_stride = 100;
    } else if (name == "rossler") {
        p.kind = DynamicsKind::rossler;
        p.T = 100.0;
        p.depth = 3;
        p.time_stride = 25;
    } else if (name == "linear") {
        p.kind = DynamicsKind::custom;
        p.graph.n = 10;
        p.graph.m = 2;
        p.T = 1.0;
        p.depth = 1;
        p.time_stride = 1;
    } else {
        throw ParameterError("unknown preset '" + name + "'");
    }
    return p;
}

std::vector<std::string> preset_names()
{
    return {"hr", "fhn", "rossler", "linear"};
}

CustomDynamics linear_toy_dynamics()
{
    auto tree = TreeTemplate::build(1, 1);
    auto ops = OperatorSet::standard();
    std::vector<OpToken> tokens{UnaryOp::id};
    CustomDynamics dyn;
    dyn.f.emplace_back(tree, ops, make_sequence(tree, ops, tokens), std::vector<double>{1.0, 0.0});
    dyn.g.emplace_back();
    return dyn;
}

DynamicsSpec make_dynamics(DynamicsKind kind, const std::map<std::string, double>& params, std::size_t n_nodes,
                           std::uint64_t seed)
{
    switch (kind) {
    case DynamicsKind::hr: return DynamicsSpec::hr(params);
    case DynamicsKind::fhn: return DynamicsSpec::fhn(params);
    case DynamicsKind::rossler: return DynamicsSpec::rossler(n_nodes, stream_seed(seed, "omega"), params);
    case DynamicsKind::custom:
        if (!params.empty()) throw ParameterError("custom dynamics take no named parameters");
        return DynamicsSpec::from_expressions(linear_toy_dynamics(), Normalization::none);
    }
    throw ParameterError("unknown dynamics kind");
}

OperatorSequence embed_sequence(const TreeTemplate& tree, const OperatorSet& ops, const std::vector<OpToken>& core,
                                std::size_t core_depth)
{
    if (core_depth == 0 || core_depth > tree.depth()) {
        throw ParameterError("reference structure needs tree depth >= " + std::to_string(core_depth));
    }
    std::vector<OpToken> tokens;
    std::function<void(std::size_t)> zeros = [&](std::size_t level) {
        tokens.emplace_back(UnaryOp::zero);
        if (level == 1) return;
        tokens.emplace_back(BinaryOp::add);
        zeros(level - 1);
        zeros(level - 1);
    };
    std::function<void(std::size_t)> wrap = [&](std::size_t level) {
        if (level == core_depth) {
            tokens.insert(tokens.end(), core.begin(), core.end());
            return;
        }
        tokens.emplace_back(UnaryOp::id);
        tokens.emplace_back(BinaryOp::add);
        wrap(level - 1);
        zeros(level - 1);
    };
    wrap(tree.depth());
    return make_sequence(tree, ops, tokens);
}

SearchConfig ReferenceStructure::applied_to(SearchConfig cfg) const
{
    cfg.depth_f = depth_f;
    cfg.depth_g = depth_g;
    return cfg;
}

std::vector<ReferenceStructure> reference_structures(const DynamicsSpec& spec, const SearchConfig& cfg, bool native)
{
    const std::size_t d = spec.dim;
    using U = UnaryOp;
    using B = BinaryOp;
    struct Core {
        std::vector<OpToken> tokens;
        std::size_t depth;
    };
    auto build = [&](const Core& cf, const Core& cg) {
        ReferenceStructure r;
        r.depth_f = native ? cf.depth : cfg.depth_f;
        r.depth_g = native ? cg.depth : cfg.depth_g;
        r.e_f = embed_sequence(TreeTemplate::build(r.depth_f, d), cfg.ops_f, cf.tokens, cf.depth);
        r.e_g = embed_sequence(TreeTemplate::build(r.depth_g, 2 * d), cfg.ops_g, cg.tokens, cg.depth);
        return r;
    };
    const Core g_zero{{U::zero}, 1};
    const Core linear{{U::id}, 1};

    std::vector<ReferenceStructure> out;
    switch (spec.kind) {
    case DynamicsKind::hr:
        out.push_back(build({{U::id, B::add, U::id, B::add, U::id, U::cube, U::id, B::add, U::square, U::zero}, 3},
                            {{U::id, B::mul, U::id, U::sigmoid}, 2}));
        out.push_back(build({{U::id, B::add, U::id, U::square}, 2}, g_zero));
        out.push_back(build(linear, g_zero));
        break;
    case DynamicsKind::fhn:
        out.push_back(build({{U::id, B::add, U::id, U::cube}, 2}, linear));
        out.push_back(build(linear, g_zero));
        break;
    case DynamicsKind::rossler:
        out.push_back(build(linear, linear));
        out.push_back(build(linear, g_zero));
        out.push_back(build({{U::id, B::mul, U::id, U::id}, 2}, g_zero));
        break;
    case DynamicsKind::custom:
        for (std::size_t k = 0; k < d; ++k) out.push_back(build(linear, g_zero));
        break;
    }
    return out;
}

} // namespace netfex
