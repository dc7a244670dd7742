#include "netfex/loss.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "netfex/error.hpp"

namespace netfex {

namespace {

constexpr std::size_t block_size = 512;

} // namespace

LossContext::LossContext(DirectedGraph graph, const DerivativeData& data, std::size_t target_dim,
                         Normalization normalization, LossOptions opts)
    : graph_(std::move(graph)), d_(data.states.dim()), target_dim_(target_dim), normalization_(normalization),
      opts_(opts)
{
    const auto& states = data.states;
    const auto& derivs = data.derivatives;
    const std::size_t n = graph_.n_nodes();
    if (states.n_nodes() != n || derivs.n_nodes() != n) throw ParameterError("data and graph node counts differ");
    if (states.n_times() != derivs.n_times() || states.dim() != derivs.dim()) {
        throw ParameterError("states and derivatives are not aligned");
    }
    if (target_dim >= d_) throw ParameterError("target dimension out of range");
    if (opts_.time_stride == 0) throw ParameterError("time stride must be >= 1");
    const std::size_t stride = opts_.time_stride;
    n_times_ = (states.n_times() + stride - 1) / stride;
    if (n_times_ == 0) throw TooShortError("no time samples for the loss");

    targets_.resize(n * n_times_);
    for (std::size_t i = 0; i < n; ++i) {
        auto y = derivs.channel(i, target_dim);
        for (std::size_t t = 0; t < n_times_; ++t) targets_[i * n_times_ + t] = y[t * stride];
    }

    std::vector<double> raw(n_times_);
    features_.resize((n_unary_codes - 2) * d_ * n * n_times_);
    for (std::size_t k = 0; k < d_; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            auto x = states.channel(i, k);
            for (std::size_t t = 0; t < n_times_; ++t) raw[t] = x[t * stride];
            for (std::size_t code = 2; code < n_unary_codes; ++code) {
                auto* out = const_cast<double*>(feature(code, k, static_cast<NodeId>(i)));
                apply_column(static_cast<UnaryOp>(code), raw.data(), out, n_times_);
            }
        }
    }

    norms_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto k = graph_.in_degree(static_cast<NodeId>(i));
        norms_[i] = normalization_ == Normalization::none ? 1.0 : (k == 0 ? 0.0 : 1.0 / static_cast<double>(k));
    }
}

LossContext LossContext::with_graph(DirectedGraph graph) const
{
    if (graph.n_nodes() != graph_.n_nodes()) throw ParameterError("replacement graph has a different node count");
    LossContext c = *this;
    c.graph_ = std::move(graph);
    for (std::size_t i = 0; i < c.norms_.size(); ++i) {
        const auto k = c.graph_.in_degree(static_cast<NodeId>(i));
        c.norms_[i] = normalization_ == Normalization::none ? 1.0 : (k == 0 ? 0.0 : 1.0 / static_cast<double>(k));
    }
    return c;
}

namespace {

// Appends the interactions of target i with candidate sources `scope`
// (ascending, may include i).
void add_links(const LossContext& ctx, InteractionPlan& plan, NodeId i, std::span<const NodeId> scope, double norm)
{
    const auto& g = ctx.graph();
    if (ctx.mode() == InteractionMode::dense) {
        for (NodeId j : scope) {
            if (j == i) continue;
            plan.sources.push_back(j);
            plan.weights.push_back(g.has_arc(j, i) ? norm : 0.0);
        }
    } else {
        auto in = g.in_neighbors(i);
        // both ranges ascending: merge-style intersection
        std::size_t a = 0, b = 0;
        while (a < in.size() && b < scope.size()) {
            if (in[a] < scope[b]) {
                ++a;
            } else if (scope[b] < in[a]) {
                ++b;
            } else {
                plan.sources.push_back(in[a]);
                plan.weights.push_back(norm);
                ++a;
                ++b;
            }
        }
    }
    plan.targets.push_back(i);
    plan.link_begin.push_back(plan.sources.size());
}

std::vector<NodeId> all_nodes(std::size_t n)
{
    std::vector<NodeId> v(n);
    std::iota(v.begin(), v.end(), NodeId{0});
    return v;
}

} // namespace

InteractionPlan full_plan(const LossContext& ctx)
{
    InteractionPlan plan;
    const auto nodes = all_nodes(ctx.n_nodes());
    for (NodeId i : nodes) add_links(ctx, plan, i, nodes, ctx.norm(i));
    return plan;
}

InteractionPlan rbm_plan(const LossContext& ctx, std::size_t p, Rng& rng, bool rescale)
{
    const std::size_t n = ctx.n_nodes();
    if (p < 2) throw ParameterError("random batch size must be >= 2");
    if (p > n) throw ParameterError("random batch size exceeds node count");
    auto order = all_nodes(n);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_batches = (n + p - 1) / p;
    std::vector<std::vector<NodeId>> batches(n_batches);
    std::vector<std::size_t> batch_of(n);
    for (std::size_t q = 0; q < n; ++q) {
        batch_of[order[q]] = q / p;
        batches[q / p].push_back(order[q]);
    }
    for (auto& b : batches) std::sort(b.begin(), b.end());
    const double scale = rescale ? static_cast<double>(n - 1) / static_cast<double>(p - 1) : 1.0;

    InteractionPlan plan;
    for (NodeId i = 0; i < n; ++i) add_links(ctx, plan, i, batches[batch_of[i]], ctx.norm(i) * scale);
    return plan;
}

InteractionPlan subset_plan(const LossContext& ctx, std::span<const NodeId> nodes_in, bool full_neighborhood)
{
    std::vector<NodeId> nodes(nodes_in.begin(), nodes_in.end());
    std::sort(nodes.begin(), nodes.end());
    if (std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end()) throw ParameterError("duplicate subset node");
    if (!nodes.empty() && nodes.back() >= ctx.n_nodes()) throw ParameterError("subset node out of range");

    InteractionPlan plan;
    const auto everyone = all_nodes(ctx.n_nodes());
    for (NodeId i : nodes) {
        if (full_neighborhood) {
            add_links(ctx, plan, i, everyone, ctx.norm(i));
            continue;
        }
        double norm = 1.0;
        if (ctx.normalization() == Normalization::in_degree) {
            auto in = ctx.graph().in_neighbors(i);
            std::size_t k = 0;
            for (NodeId j : in) k += std::binary_search(nodes.begin(), nodes.end(), j) ? 1 : 0;
            norm = k == 0 ? 0.0 : 1.0 / static_cast<double>(k);
        }
        add_links(ctx, plan, i, nodes, norm);
    }
    return plan;
}

LossEvaluator::LossEvaluator(const LossContext& ctx, const Expression& f, const Expression& g)
    : ctx_(&ctx), f_tape_(f, std::min(block_size, ctx.n_times())), g_tape_(g, std::min(block_size, ctx.n_times())),
      f_table_(ctx.dim() * n_unary_codes, nullptr), g_table_(2 * ctx.dim() * n_unary_codes, nullptr),
      residual_(block_size), seed_(block_size)
{
    if (f.input_dim() != ctx.dim()) throw ParameterError("F expression input dimension must equal d");
    if (g.input_dim() != 2 * ctx.dim()) throw ParameterError("G expression input dimension must equal 2d");
}

double LossEvaluator::loss(const InteractionPlan& plan)
{
    return run(plan, {}, {}, false);
}

double LossEvaluator::loss_and_gradient(const InteractionPlan& plan, std::span<double> grad_f, std::span<double> grad_g)
{
    return run(plan, grad_f, grad_g, true);
}

double LossEvaluator::run(const InteractionPlan& plan, std::span<double> grad_f, std::span<double> grad_g,
                          bool with_grad)
{
    const auto& ctx = *ctx_;
    const std::size_t d = ctx.dim();
    const std::size_t T = ctx.n_times();
    if (plan.targets.empty()) throw ParameterError("interaction plan has no targets");
    if (with_grad) {
        std::fill(grad_f.begin(), grad_f.end(), 0.0);
        std::fill(grad_g.begin(), grad_g.end(), 0.0);
    }
    const double scale = 1.0 / (static_cast<double>(plan.targets.size()) * static_cast<double>(T));

    double total = 0.0;
    for (std::size_t s = 0; s < plan.targets.size(); ++s) {
        const NodeId i = plan.targets[s];
        const std::size_t l0 = plan.link_begin[s], l1 = plan.link_begin[s + 1];
        const double* y = ctx.target(i);
        for (std::size_t t0 = 0; t0 < T; t0 += block_size) {
            const std::size_t B = std::min(block_size, T - t0);
            for (std::size_t k = 0; k < d; ++k) {
                for (std::size_t c = 2; c < n_unary_codes; ++c) {
                    const double* p = ctx.feature(c, k, i) + t0;
                    f_table_[k * n_unary_codes + c] = p;
                    g_table_[k * n_unary_codes + c] = p;
                }
            }
            auto set_source = [&](NodeId j) {
                for (std::size_t k = 0; k < d; ++k) {
                    for (std::size_t c = 2; c < n_unary_codes; ++c) {
                        g_table_[(d + k) * n_unary_codes + c] = ctx.feature(c, k, j) + t0;
                    }
                }
            };

            f_tape_.forward(f_table_, B);
            auto fo = f_tape_.output();
            for (std::size_t b = 0; b < B; ++b) residual_[b] = fo[b] - y[t0 + b];
            for (std::size_t l = l0; l < l1; ++l) {
                set_source(plan.sources[l]);
                g_tape_.forward(g_table_, B);
                auto go = g_tape_.output();
                const double w = plan.weights[l];
                for (std::size_t b = 0; b < B; ++b) residual_[b] += w * go[b];
            }
            double block = 0.0;
            for (std::size_t b = 0; b < B; ++b) block += residual_[b] * residual_[b];
            total += block;

            if (!with_grad) continue;
            for (std::size_t b = 0; b < B; ++b) seed_[b] = 2.0 * scale * residual_[b];
            f_tape_.backward(f_table_, {seed_.data(), B}, grad_f);
            for (std::size_t l = l0; l < l1; ++l) {
                const double w = plan.weights[l];
                if (w == 0.0) continue;
                set_source(plan.sources[l]);
                g_tape_.forward(g_table_, B);
                for (std::size_t b = 0; b < B; ++b) seed_[b] = 2.0 * scale * w * residual_[b];
                g_tape_.backward(g_table_, {seed_.data(), B}, grad_g);
            }
        }
    }
    pairs_ += plan.pair_count();
    return total * scale;
}

double full_loss(const LossContext& ctx, const Expression& f, const Expression& g)
{
    LossEvaluator eval(ctx, f, g);
    try {
        return eval.loss(full_plan(ctx));
    } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
    }
}

double rbm_loss(const LossContext& ctx, const Expression& f, const Expression& g, std::size_t p, std::uint64_t seed,
                bool rescale)
{
    Rng rng(seed);
    auto plan = rbm_plan(ctx, p, rng, rescale);
    LossEvaluator eval(ctx, f, g);
    try {
        return eval.loss(plan);
    } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
    }
}

} // namespace netfex
