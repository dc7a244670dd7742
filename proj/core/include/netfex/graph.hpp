#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace netfex {

using NodeId = std::uint32_t;

/// Ordered pair src -> dst. A_{dst,src} = 1, i.e. src is an in-neighbor of dst.
struct Arc {
    NodeId src = 0;
    NodeId dst = 0;
    auto operator<=>(const Arc&) const = default;
};

/// Immutable directed graph without self-loops or duplicate arcs.
///
/// Arcs are kept as a sorted edge list plus CSR in/out adjacency, so
/// in-neighbor iteration is O(in_degree). Neighbor lists are ascending.
class DirectedGraph {
public:
    DirectedGraph() = default;

    /// Throws ParameterError on self-loops, duplicates or out-of-range ids.
    DirectedGraph(std::size_t n_nodes, std::vector<Arc> arcs);

    std::size_t n_nodes() const noexcept { return n_nodes_; }
    std::size_t n_arcs() const noexcept { return arcs_.size(); }
    std::span<const Arc> arcs() const noexcept { return arcs_; }

    std::span<const NodeId> in_neighbors(std::size_t node) const;
    std::span<const NodeId> out_neighbors(std::size_t node) const;
    std::size_t in_degree(std::size_t node) const { return in_neighbors(node).size(); }
    std::size_t out_degree(std::size_t node) const { return out_neighbors(node).size(); }

    bool has_arc(NodeId src, NodeId dst) const;

    /// Number of unordered pairs {i, j} joined by at least one arc.
    std::size_t undirected_edge_count() const;

    /// True when the underlying undirected graph is connected.
    bool is_weakly_connected() const;

    friend bool operator==(const DirectedGraph& a, const DirectedGraph& b)
    {
        return a.n_nodes_ == b.n_nodes_ && a.arcs_ == b.arcs_;
    }

private:
    std::size_t n_nodes_ = 0;
    std::vector<Arc> arcs_;
    std::vector<std::size_t> in_offsets_{0};
    std::vector<NodeId> in_index_;
    std::vector<std::size_t> out_offsets_{0};
    std::vector<NodeId> out_index_;
};

/// Erdos-Renyi G(n, p); each realized edge becomes i->j, j->i or both
/// with probability 1/3 each.
DirectedGraph generate_er(std::size_t n, double p, std::uint64_t seed);

/// Barabasi-Albert preferential attachment starting from m isolated seed
/// nodes. Every edge is stored as a reciprocal arc pair.
DirectedGraph generate_ba(std::size_t n, std::size_t m, std::uint64_t seed);

/// Removes up to remove_fraction * |arcs| arcs chosen uniformly at random,
/// skipping removals that would break weak connectivity.
DirectedGraph prune_to_directed(const DirectedGraph& g, double remove_fraction, std::uint64_t seed);

enum class PerturbMode { add, remove };

/// Adds or removes round(fraction * |arcs|) arcs. Removal keeps the graph
/// weakly connected; throws RetriesExhaustedError when that is impossible.
DirectedGraph perturb_links(const DirectedGraph& g, double fraction, PerturbMode mode,
                            std::uint64_t seed, int max_attempts = 16);

// Edge-list text: one "src dst" pair per line, 0-based; '#' starts a comment.
// A "# nodes <n>" comment fixes the node count (isolated trailing nodes).
std::string to_edge_list(const DirectedGraph& g);
DirectedGraph parse_edge_list(std::string_view text);
DirectedGraph read_edge_list(const std::filesystem::path& path);
void write_edge_list(const std::filesystem::path& path, const DirectedGraph& g);

} // namespace netfex
