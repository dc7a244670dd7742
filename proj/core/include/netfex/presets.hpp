#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "netfex/dynamics.hpp"
#include "netfex/expr.hpp"
#include "netfex/graph.hpp"
#include "netfex/search.hpp"

namespace netfex {

struct GraphRecipe {
    std::string type = "sf"; // sf | er | file
    std::size_t n = 100;
    std::size_t m = 5;              // sf attachment count
    double p = 0.05;                // er edge probability
    double remove_fraction = 0.73;  // sf: reciprocal arcs dropped to make it directed
    std::string path;               // file: edge list
};

/// sf: BA(n, m) with reciprocal arcs, then pruned keeping weak connectivity.
DirectedGraph build_graph(const GraphRecipe& recipe, std::uint64_t seed);

struct Preset {
    std::string name;
    DynamicsKind kind = DynamicsKind::fhn;
    GraphRecipe graph;
    double T = 100.0;
    double dt = 0.01;
    std::size_t depth = 3;
    std::size_t time_stride = 1;
};

/// hr, fhn, rossler, or linear (dx/dt = x on one dimension).
Preset preset(const std::string& name);
std::vector<std::string> preset_names();

/// Dynamics of `kind` with parameter overrides; Rossler frequencies are drawn from seed.
DynamicsSpec make_dynamics(DynamicsKind kind, const std::map<std::string, double>& params, std::size_t n_nodes,
                           std::uint64_t seed);
/// The linear toy: F = id leaf with alpha 1, no interaction.
CustomDynamics linear_toy_dynamics();

struct ReferenceStructure {
    OperatorSequence e_f;
    OperatorSequence e_g;
    std::size_t depth_f = 0;
    std::size_t depth_g = 0;

    /// cfg with the tree depths this structure was built for
    SearchConfig applied_to(SearchConfig cfg) const;
};

/// Operator sequences that can express each true equation. By default they
/// are embedded in trees of the configured depths; with `native` each uses the
/// smallest tree that holds it. Throws ParameterError when a depth is too
/// shallow or a needed operator is missing from the sets.
std::vector<ReferenceStructure> reference_structures(const DynamicsSpec& spec, const SearchConfig& cfg,
                                                     bool native = false);

/// Embeds a depth-`core_depth` preorder token list into template(depth):
/// id(add(core, 0-subtree)) repeated as needed.
OperatorSequence embed_sequence(const TreeTemplate& tree, const OperatorSet& ops, const std::vector<OpToken>& core,
                                std::size_t core_depth);

} // namespace netfex
