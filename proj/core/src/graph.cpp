#include "netfex/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "netfex/error.hpp"
#include "netfex/rng.hpp"

namespace netfex {
namespace {

std::uint64_t key(NodeId src, NodeId dst)
{
    return (static_cast<std::uint64_t>(src) << 32) | dst;
}

// Weak connectivity of the arc set `arcs` on n nodes, ignoring `skip`.
bool weakly_connected(std::size_t n, const std::set<std::uint64_t>& arcs, std::uint64_t skip)
{
    if (n <= 1) return true;
    std::vector<std::vector<NodeId>> adj(n);
    for (auto k : arcs) {
        if (k == skip) continue;
        auto s = static_cast<NodeId>(k >> 32);
        auto d = static_cast<NodeId>(k & 0xffffffffULL);
        adj[s].push_back(d);
        adj[d].push_back(s);
    }
    std::vector<char> seen(n, 0);
    std::vector<NodeId> stack{0};
    seen[0] = 1;
    std::size_t visited = 1;
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        for (auto w : adj[v]) {
            if (!seen[w]) {
                seen[w] = 1;
                ++visited;
                stack.push_back(w);
            }
        }
    }
    return visited == n;
}

// Greedy removal in random order, up to `target` arcs. Dropping one
// direction of a reciprocal pair never disconnects, so the BFS check only
// runs for the last arc of a pair. Returns the number removed.
std::size_t remove_arcs(std::size_t n, std::set<std::uint64_t>& arcs, std::size_t target, Rng& rng)
{
    std::vector<std::uint64_t> order(arcs.begin(), arcs.end());
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t removed = 0;
    for (auto k : order) {
        if (removed == target) break;
        auto s = static_cast<NodeId>(k >> 32);
        auto d = static_cast<NodeId>(k & 0xffffffffULL);
        if (arcs.count(key(d, s)) > 0 || weakly_connected(n, arcs, k)) {
            arcs.erase(k);
            ++removed;
        }
    }
    return removed;
}

DirectedGraph from_keys(std::size_t n, const std::set<std::uint64_t>& keys)
{
    std::vector<Arc> arcs;
    arcs.reserve(keys.size());
    for (auto k : keys) {
        arcs.push_back({static_cast<NodeId>(k >> 32), static_cast<NodeId>(k & 0xffffffffULL)});
    }
    return DirectedGraph(n, std::move(arcs));
}

std::set<std::uint64_t> to_keys(const DirectedGraph& g)
{
    std::set<std::uint64_t> keys;
    for (const auto& a : g.arcs()) keys.insert(key(a.src, a.dst));
    return keys;
}

void check_probability(double p, const char* name)
{
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ParameterError(std::string(name) + " must lie in [0, 1]");
    }
}

} // namespace

DirectedGraph::DirectedGraph(std::size_t n_nodes, std::vector<Arc> arcs)
    : n_nodes_(n_nodes), arcs_(std::move(arcs))
{
    std::sort(arcs_.begin(), arcs_.end());
    for (std::size_t i = 0; i < arcs_.size(); ++i) {
        const auto& a = arcs_[i];
        if (a.src >= n_nodes_ || a.dst >= n_nodes_) {
            throw ParameterError("arc endpoint out of range: " + std::to_string(a.src) + " " +
                                 std::to_string(a.dst));
        }
        if (a.src == a.dst) throw ParameterError("self-loop at node " + std::to_string(a.src));
        if (i > 0 && arcs_[i - 1] == a) {
            throw ParameterError("duplicate arc " + std::to_string(a.src) + " " + std::to_string(a.dst));
        }
    }

    std::vector<std::size_t> in_count(n_nodes_, 0), out_count(n_nodes_, 0);
    for (const auto& a : arcs_) {
        ++in_count[a.dst];
        ++out_count[a.src];
    }
    in_offsets_.assign(n_nodes_ + 1, 0);
    out_offsets_.assign(n_nodes_ + 1, 0);
    for (std::size_t i = 0; i < n_nodes_; ++i) {
        in_offsets_[i + 1] = in_offsets_[i] + in_count[i];
        out_offsets_[i + 1] = out_offsets_[i] + out_count[i];
    }
    in_index_.resize(arcs_.size());
    out_index_.resize(arcs_.size());
    auto in_fill = in_offsets_;
    auto out_fill = out_offsets_;
    // arcs_ is sorted by (src, dst), so both lists come out ascending.
    for (const auto& a : arcs_) {
        in_index_[in_fill[a.dst]++] = a.src;
        out_index_[out_fill[a.src]++] = a.dst;
    }
}

std::span<const NodeId> DirectedGraph::in_neighbors(std::size_t node) const
{
    return std::span<const NodeId>(in_index_).subspan(in_offsets_[node],
                                                      in_offsets_[node + 1] - in_offsets_[node]);
}

std::span<const NodeId> DirectedGraph::out_neighbors(std::size_t node) const
{
    return std::span<const NodeId>(out_index_).subspan(out_offsets_[node],
                                                       out_offsets_[node + 1] - out_offsets_[node]);
}

bool DirectedGraph::has_arc(NodeId src, NodeId dst) const
{
    if (src >= n_nodes_) return false;
    auto out = out_neighbors(src);
    return std::binary_search(out.begin(), out.end(), dst);
}

std::size_t DirectedGraph::undirected_edge_count() const
{
    std::size_t count = 0;
    for (const auto& a : arcs_) {
        // count each pair once: at its (min, max) arc, or at the only arc present
        if (a.src < a.dst || !has_arc(a.dst, a.src)) ++count;
    }
    return count;
}

bool DirectedGraph::is_weakly_connected() const
{
    return weakly_connected(n_nodes_, to_keys(*this), ~0ULL);
}

DirectedGraph generate_er(std::size_t n, double p, std::uint64_t seed)
{
    check_probability(p, "edge probability p");
    if (n < 2) throw ParameterError("generate_er requires n >= 2");
    Rng rng(seed);
    std::vector<Arc> arcs;
    for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = i + 1; j < n; ++j) {
            if (uniform01(rng) >= p) continue;
            switch (rng() % 3) {
            case 0: arcs.push_back({i, j}); break;
            case 1: arcs.push_back({j, i}); break;
            default:
                arcs.push_back({i, j});
                arcs.push_back({j, i});
            }
        }
    }
    return DirectedGraph(n, std::move(arcs));
}

DirectedGraph generate_ba(std::size_t n, std::size_t m, std::uint64_t seed)
{
    if (m < 1 || m >= n) throw ParameterError("generate_ba requires 1 <= m < n");
    Rng rng(seed);
    std::vector<Arc> arcs;
    arcs.reserve(2 * (n - m) * m);
    // Each node appears in `repeated` once per incident edge, so a uniform
    // draw from it is a degree-proportional draw.
    std::vector<NodeId> repeated;
    std::vector<NodeId> targets(m);
    std::iota(targets.begin(), targets.end(), NodeId{0});
    for (auto source = static_cast<NodeId>(m); source < n; ++source) {
        for (auto t : targets) {
            arcs.push_back({source, t});
            arcs.push_back({t, source});
            repeated.push_back(t);
        }
        repeated.insert(repeated.end(), m, source);
        if (source + 1 == n) break;
        std::set<NodeId> chosen;
        while (chosen.size() < m) {
            chosen.insert(repeated[static_cast<std::size_t>(rng() % repeated.size())]);
        }
        targets.assign(chosen.begin(), chosen.end());
    }
    return DirectedGraph(n, std::move(arcs));
}

DirectedGraph prune_to_directed(const DirectedGraph& g, double remove_fraction, std::uint64_t seed)
{
    if (!(remove_fraction >= 0.0 && remove_fraction < 1.0)) {
        throw ParameterError("remove_fraction must lie in [0, 1)");
    }
    if (!g.is_weakly_connected()) throw PreconditionError("prune_to_directed requires a weakly connected graph");
    auto target = static_cast<std::size_t>(std::llround(remove_fraction * static_cast<double>(g.n_arcs())));
    if (target == 0) return g;

    Rng rng(seed);
    auto keys = to_keys(g);
    remove_arcs(g.n_nodes(), keys, target, rng);
    return from_keys(g.n_nodes(), keys);
}

DirectedGraph perturb_links(const DirectedGraph& g, double fraction, PerturbMode mode, std::uint64_t seed,
                            int max_attempts)
{
    if (!(fraction >= 0.0 && fraction <= 0.5)) throw ParameterError("perturb fraction must lie in [0, 0.5]");
    auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(g.n_arcs())));
    if (count == 0) return g;

    Rng rng(seed);
    auto keys = to_keys(g);
    const std::size_t n = g.n_nodes();

    if (mode == PerturbMode::add) {
        if (keys.size() + count > n * (n - 1)) {
            throw RetriesExhaustedError("not enough absent arcs to add " + std::to_string(count));
        }
        std::size_t added = 0;
        while (added < count) {
            auto s = static_cast<NodeId>(rng() % n);
            auto d = static_cast<NodeId>(rng() % n);
            if (s == d) continue;
            if (keys.insert(key(s, d)).second) ++added;
        }
        return from_keys(n, keys);
    }

    if (!g.is_weakly_connected()) throw PreconditionError("perturb_links(remove) requires a weakly connected graph");
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        auto trial = keys;
        if (remove_arcs(n, trial, count, rng) == count) return from_keys(n, trial);
    }
    throw RetriesExhaustedError("could not remove " + std::to_string(count) +
                                " arcs while keeping the graph weakly connected");
}

std::string to_edge_list(const DirectedGraph& g)
{
    std::ostringstream out;
    out << "# nodes " << g.n_nodes() << '\n';
    for (const auto& a : g.arcs()) out << a.src << ' ' << a.dst << '\n';
    return out.str();
}

DirectedGraph parse_edge_list(std::string_view text)
{
    std::vector<Arc> arcs;
    std::size_t declared = 0;
    std::size_t max_id = 0;
    bool any = false;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (line[first] == '#') {
            std::istringstream comment(line.substr(first + 1));
            std::string word;
            std::size_t n = 0;
            if (comment >> word && word == "nodes" && comment >> n) declared = n;
            continue;
        }
        std::istringstream fields(line);
        long long s = -1, d = -1;
        std::string extra;
        if (!(fields >> s >> d) || (fields >> extra) || s < 0 || d < 0) {
            throw IoError("malformed edge-list line " + std::to_string(line_no) + ": " + line);
        }
        arcs.push_back({static_cast<NodeId>(s), static_cast<NodeId>(d)});
        max_id = std::max<std::size_t>(max_id, static_cast<std::size_t>(std::max(s, d)));
        any = true;
    }
    std::size_t n = std::max(declared, any ? max_id + 1 : 0);
    return DirectedGraph(n, std::move(arcs));
}

DirectedGraph read_edge_list(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open edge list " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_edge_list(buf.str());
}

void write_edge_list(const std::filesystem::path& path, const DirectedGraph& g)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write edge list " + path.string());
    out << to_edge_list(g);
}

} // namespace netfex
