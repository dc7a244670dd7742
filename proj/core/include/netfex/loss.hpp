#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "netfex/dynamics.hpp"
#include "netfex/expr.hpp"
#include "netfex/graph.hpp"
#include "netfex/rng.hpp"
#include "netfex/tape.hpp"

namespace netfex {

/// sparse: a node interacts with its in-neighbors only.
/// dense: every ordered pair in scope is evaluated and weighted by A_ij,
/// which is the all-pairs cost model the RBM accelerates.
enum class InteractionMode { sparse, dense };

struct LossOptions {
    std::size_t time_stride = 1;
    InteractionMode mode = InteractionMode::sparse;
};

/// Read-only regression data for one output dimension: aligned states,
/// five-point targets, and cached leaf features op(x) for every operator.
class LossContext {
public:
    LossContext(DirectedGraph graph, const DerivativeData& data, std::size_t target_dim, Normalization normalization,
                LossOptions opts = {});

    const DirectedGraph& graph() const noexcept { return graph_; }
    std::size_t n_nodes() const noexcept { return graph_.n_nodes(); }
    std::size_t dim() const noexcept { return d_; }
    std::size_t n_times() const noexcept { return n_times_; }
    std::size_t target_dim() const noexcept { return target_dim_; }
    Normalization normalization() const noexcept { return normalization_; }
    InteractionMode mode() const noexcept { return opts_.mode; }

    /// op(x_{node,k}) over all retained times; null for constant operators.
    const double* feature(std::size_t code, std::size_t k, NodeId node) const
    {
        if (code < 2) return nullptr;
        return features_.data() + (((code - 2) * d_ + k) * graph_.n_nodes() + node) * n_times_;
    }
    const double* target(NodeId node) const { return targets_.data() + node * n_times_; }
    /// 1 or 1 / k_in (0 when k_in = 0).
    double norm(NodeId node) const { return norms_[node]; }

    /// Copy with a different graph, used for perturbed-topology runs.
    LossContext with_graph(DirectedGraph graph) const;

private:
    LossContext() = default;

    DirectedGraph graph_;
    std::size_t d_ = 0;
    std::size_t n_times_ = 0;
    std::size_t target_dim_ = 0;
    Normalization normalization_ = Normalization::none;
    LossOptions opts_;
    std::vector<double> features_;
    std::vector<double> targets_;
    std::vector<double> norms_;
};

/// Which residuals enter the mean and which (i, j) interactions each uses.
/// links of targets[s] are sources[link_begin[s] .. link_begin[s+1]).
struct InteractionPlan {
    std::vector<NodeId> targets;
    std::vector<std::size_t> link_begin{0};
    std::vector<NodeId> sources;
    std::vector<double> weights;

    std::size_t pair_count() const noexcept { return sources.size(); }
};

InteractionPlan full_plan(const LossContext& ctx);
/// Uniform random partition into ceil(N/p) batches; interactions stay in-batch.
/// rescale multiplies in-batch sums by (N-1)/(p-1).
InteractionPlan rbm_plan(const LossContext& ctx, std::size_t p, Rng& rng, bool rescale = false);
/// Residuals of `nodes` only. full_neighborhood keeps every in-neighbor;
/// otherwise interactions are restricted to the induced subgraph, normalized
/// by the induced in-degree.
InteractionPlan subset_plan(const LossContext& ctx, std::span<const NodeId> nodes, bool full_neighborhood);

/// Evaluates the least-squares loss of one (F, G) pair. Holds tapes bound to
/// the two expressions; update their theta in place between calls.
class LossEvaluator {
public:
    LossEvaluator(const LossContext& ctx, const Expression& f, const Expression& g);

    /// Throws NumericError on an overflowing intermediate.
    double loss(const InteractionPlan& plan);
    /// grad_f, grad_g are overwritten.
    double loss_and_gradient(const InteractionPlan& plan, std::span<double> grad_f, std::span<double> grad_g);

    std::uint64_t pairs_evaluated() const noexcept { return pairs_; }

private:
    double run(const InteractionPlan& plan, std::span<double> grad_f, std::span<double> grad_g, bool with_grad);

    const LossContext* ctx_;
    BatchTape f_tape_;
    BatchTape g_tape_;
    std::vector<const double*> f_table_;
    std::vector<const double*> g_table_;
    std::vector<double> residual_;
    std::vector<double> seed_;
    std::uint64_t pairs_ = 0;
};

/// Mean squared residual over all nodes; +inf when an expression overflows.
double full_loss(const LossContext& ctx, const Expression& f, const Expression& g);
/// Random-batch loss with a partition drawn from `seed`; +inf on overflow.
double rbm_loss(const LossContext& ctx, const Expression& f, const Expression& g, std::size_t p, std::uint64_t seed,
                bool rescale = false);

} // namespace netfex
