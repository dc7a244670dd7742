#include "netfex/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "netfex/error.hpp"
#include "netfex/log.hpp"
#include "netfex/parallel.hpp"

namespace netfex {

void SearchConfig::validate(std::size_t n_nodes) const
{
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ParameterError(std::string(name) + " must be >= 1");
    };
    positive(iterations, "iterations");
    positive(batch, "batch");
    positive(pool_capacity, "pool_capacity");
    positive(fine_tune_repeats, "fine_tune_repeats");
    positive(fine_tune_nodes, "fine_tune_nodes");
    positive(depth_f, "depth_f");
    positive(depth_g, "depth_g");
    positive(bfgs_inner_iterations, "bfgs_inner_iterations");
    if (rbm_batch < 2) throw ParameterError("rbm_batch must be >= 2");
    if (fine_tune_nodes > n_nodes) {
        throw ParameterError("fine_tune_nodes (" + std::to_string(fine_tune_nodes) + ") exceeds node count " +
                             std::to_string(n_nodes));
    }
    if (!(tau >= 0.0)) throw ParameterError("tau must be >= 0");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("epsilon must be in [0, 1]");
    if (!(nu > 0.0 && nu <= 1.0)) throw ParameterError("nu must be in (0, 1]");
    if (!(coarse_lr > 0.0 && bfgs_lr > 0.0 && controller_lr > 0.0 && fine_tune_lr > 0.0)) {
        throw ParameterError("learning rates must be positive");
    }
    ops_f.validate();
    ops_g.validate();
    TreeTemplate::build(depth_f, 1);
    TreeTemplate::build(depth_g, 1);
}

LossCounters& LossCounters::operator+=(const LossCounters& o)
{
    rbm_calls += o.rbm_calls;
    rbm_pairs += o.rbm_pairs;
    full_calls += o.full_calls;
    full_pairs += o.full_pairs;
    return *this;
}

nlohmann::json LossCounters::to_json() const
{
    return {{"rbm_calls", rbm_calls}, {"rbm_pairs", rbm_pairs}, {"full_calls", full_calls}, {"full_pairs", full_pairs}};
}

LossCounters LossCounters::from_json(const nlohmann::json& j)
{
    return {j.at("rbm_calls").get<std::uint64_t>(), j.at("rbm_pairs").get<std::uint64_t>(),
            j.at("full_calls").get<std::uint64_t>(), j.at("full_pairs").get<std::uint64_t>()};
}

Pool::Pool(std::size_t capacity) : capacity_(capacity)
{
    if (capacity == 0) throw ParameterError("pool capacity must be >= 1");
}

bool Pool::insert(Candidate c)
{
    auto same = std::find_if(items_.begin(), items_.end(),
                             [&](const Candidate& o) { return o.e_f == c.e_f && o.e_g == c.e_g; });
    if (same != items_.end()) {
        if (!(c.score > same->score)) return false;
        items_.erase(same);
    }
    auto pos = std::find_if(items_.begin(), items_.end(), [&](const Candidate& o) { return c.score > o.score; });
    if (pos == items_.end() && items_.size() >= capacity_) return false;
    items_.insert(pos, std::move(c));
    if (items_.size() > capacity_) items_.pop_back();
    return true;
}

double score_from_loss(double loss)
{
    return std::isfinite(loss) && loss >= 0.0 ? 1.0 / (1.0 + loss) : 0.0;
}

Expression make_f_expression(const SearchConfig& cfg, std::size_t d, OperatorSequence e, std::vector<double> theta)
{
    return Expression(TreeTemplate::build(cfg.depth_f, d), cfg.ops_f, std::move(e), std::move(theta));
}

Expression make_g_expression(const SearchConfig& cfg, std::size_t d, OperatorSequence e, std::vector<double> theta)
{
    return Expression(TreeTemplate::build(cfg.depth_g, 2 * d), cfg.ops_g, std::move(e), std::move(theta));
}

std::vector<double> initial_theta(const TreeTemplate& tree, Rng& rng)
{
    std::vector<double> theta(tree.n_params(), 0.0);
    for (std::size_t i = 0; i < tree.size(); ++i) {
        const auto& node = tree.node(i);
        const std::size_t count = tree.param_count(i);
        // last slot of every unary node is its bias
        for (std::size_t q = 0; q + 1 < count; ++q) theta[node.param_offset + q] = uniform(rng, -0.5, 0.5);
    }
    return theta;
}

namespace {

// theta_f and theta_g concatenated, as the optimizers see them
struct JointParams {
    Expression& f;
    Expression& g;
    std::size_t nf;
    std::vector<double> grad_f;
    std::vector<double> grad_g;

    JointParams(Expression& f_, Expression& g_)
        : f(f_), g(g_), nf(f_.theta().size()), grad_f(f_.theta().size()), grad_g(g_.theta().size())
    {
    }

    std::vector<double> get() const
    {
        std::vector<double> x(f.theta().begin(), f.theta().end());
        x.insert(x.end(), g.theta().begin(), g.theta().end());
        return x;
    }
    void set(std::span<const double> x)
    {
        f.set_theta(x.first(nf));
        g.set_theta(x.subspan(nf));
    }
    void gather(std::span<double> out) const
    {
        std::copy(grad_f.begin(), grad_f.end(), out.begin());
        std::copy(grad_g.begin(), grad_g.end(), out.begin() + static_cast<std::ptrdiff_t>(nf));
    }
};

std::size_t count_nonzero(const std::vector<double>& a, const std::vector<double>& b)
{
    auto nz = [](double v) { return v != 0.0; };
    return static_cast<std::size_t>(std::count_if(a.begin(), a.end(), nz) + std::count_if(b.begin(), b.end(), nz));
}

} // namespace

Candidate coarse_tune(const LossContext& ctx, const SearchConfig& cfg, OperatorSequence e_f, OperatorSequence e_g,
                      const TuneSeeds& seeds, LossCounters& counters,
                      const std::optional<std::pair<std::vector<double>, std::vector<double>>>& theta)
{
    const std::size_t d = ctx.dim();
    const std::size_t n = ctx.n_nodes();
    Candidate out;
    out.e_f = e_f;
    out.e_g = e_g;

    auto tf = TreeTemplate::build(cfg.depth_f, d);
    auto tg = TreeTemplate::build(cfg.depth_g, 2 * d);
    Rng init(seeds.init);
    auto theta_f = theta ? theta->first : initial_theta(tf, init);
    auto theta_g = theta ? theta->second : initial_theta(tg, init);
    Expression f(tf, cfg.ops_f, std::move(e_f), std::move(theta_f));
    Expression g(tg, cfg.ops_g, std::move(e_g), std::move(theta_g));
    out.theta_f.assign(f.theta().begin(), f.theta().end());
    out.theta_g.assign(g.theta().begin(), g.theta().end());

    LossEvaluator eval(ctx, f, g);
    JointParams joint(f, g);
    const std::size_t p = std::min(cfg.rbm_batch, n);
    Rng rbm(seeds.rbm);
    auto draw = [&] { return n >= 2 ? rbm_plan(ctx, p, rbm, cfg.rbm_rescale) : full_plan(ctx); };

    try {
        auto x = joint.get();
        std::vector<double> grad(x.size());
        InteractionPlan plan = draw();
        Adam adam(x.size());
        for (std::size_t s = 0; s < cfg.coarse_steps; ++s) {
            if (s > 0 && !cfg.rbm_fixed_partition) plan = draw();
            eval.loss_and_gradient(plan, joint.grad_f, joint.grad_g);
            ++counters.rbm_calls;
            joint.gather(grad);
            adam.step(x, grad, cfg.coarse_lr);
            joint.set(x);
        }

        if (cfg.bfgs_steps > 0) {
            // one partition for the whole quasi-Newton stage keeps the secant pairs consistent
            if (cfg.coarse_steps > 0 && !cfg.rbm_fixed_partition) plan = draw();
            Objective obj = [&](std::span<const double> xs, std::span<double> gs) {
                joint.set(xs);
                ++counters.rbm_calls;
                if (gs.empty()) return eval.loss(plan);
                double v = eval.loss_and_gradient(plan, joint.grad_f, joint.grad_g);
                joint.gather(gs);
                return v;
            };
            BfgsOptions bopts;
            bopts.max_iter = cfg.bfgs_steps * cfg.bfgs_inner_iterations;
            bopts.step = cfg.bfgs_lr;
            auto res = bfgs_minimize(obj, x, bopts);
            x = res.x;
            joint.set(x);
        }

        Rng vr(seeds.validation);
        auto vplan = n >= 2 ? rbm_plan(ctx, p, vr, cfg.rbm_rescale) : full_plan(ctx);
        out.loss = eval.loss(vplan);
        ++counters.rbm_calls;
        out.theta_f.assign(f.theta().begin(), f.theta().end());
        out.theta_g.assign(g.theta().begin(), g.theta().end());
    } catch (const NumericError&) {
        out.loss = std::numeric_limits<double>::infinity();
    }
    counters.rbm_pairs += eval.pairs_evaluated();
    out.score = score_from_loss(out.loss);
    return out;
}

FineTuned fine_tune(const LossContext& ctx, const SearchConfig& cfg, const Candidate& cand, std::uint64_t root_seed,
                    LossCounters& counters)
{
    const std::size_t n = ctx.n_nodes();
    const std::size_t d = ctx.dim();
    if (cfg.fine_tune_nodes > n) throw ParameterError("fine_tune_nodes exceeds node count");
    Expression f = make_f_expression(cfg, d, cand.e_f, cand.theta_f);
    Expression g = make_g_expression(cfg, d, cand.e_g, cand.theta_g);
    LossEvaluator eval(ctx, f, g);
    JointParams joint(f, g);
    const auto start = joint.get();
    std::vector<double> mean(start.size(), 0.0), grad(start.size());

    FineTuned out;
    try {
        for (std::size_t rep = 0; rep < cfg.fine_tune_repeats; ++rep) {
            Rng rng = make_rng(root_seed, "fine-tune", {ctx.target_dim(), rep});
            std::vector<NodeId> nodes(n);
            std::iota(nodes.begin(), nodes.end(), NodeId{0});
            std::shuffle(nodes.begin(), nodes.end(), rng);
            nodes.resize(cfg.fine_tune_nodes);
            auto plan = subset_plan(ctx, nodes, cfg.fine_tune_full_neighborhood);

            auto x = start;
            joint.set(x);
            Adam adam(x.size());
            for (std::size_t t = 0; t < cfg.fine_tune_steps; ++t) {
                eval.loss_and_gradient(plan, joint.grad_f, joint.grad_g);
                joint.gather(grad);
                adam.step(x, grad, cosine_lr(cfg.fine_tune_lr, 0.0, t, cfg.fine_tune_steps));
                joint.set(x);
            }
            counters.full_calls += cfg.fine_tune_steps;
            filter_coefficients(x, cfg.tau);
            for (std::size_t q = 0; q < x.size(); ++q) mean[q] += x[q];
        }
        for (auto& v : mean) v /= static_cast<double>(cfg.fine_tune_repeats);
        joint.set(mean);
        out.loss = eval.loss(full_plan(ctx));
        ++counters.full_calls;
    } catch (const NumericError&) {
        joint.set(start);
        out.loss = std::numeric_limits<double>::infinity();
    }
    counters.full_pairs += eval.pairs_evaluated();
    out.theta_f.assign(f.theta().begin(), f.theta().end());
    out.theta_g.assign(g.theta().begin(), g.theta().end());
    out.nonzero = count_nonzero(out.theta_f, out.theta_g);
    return out;
}

std::size_t select_best(const std::vector<FineTuned>& tuned)
{
    if (tuned.empty()) throw ParameterError("no fine-tuned candidates to select from");
    std::size_t best = 0;
    for (std::size_t i = 1; i < tuned.size(); ++i) {
        const auto& a = tuned[i];
        const auto& b = tuned[best];
        if (a.loss < b.loss || (a.loss == b.loss && a.nonzero < b.nonzero)) best = i;
    }
    return best;
}

DimensionSearch::DimensionSearch(const LossContext& ctx, SearchConfig cfg, std::uint64_t root_seed)
    : ctx_(&ctx), cfg_(std::move(cfg)), seed_(root_seed), dim_(ctx.target_dim()),
      ctrl_f_(TreeTemplate::build(cfg_.depth_f, ctx.dim()), cfg_.ops_f, stream_seed(root_seed, "controller", {dim_, 0}),
              ControllerOptions{20, 64, cfg_.controller_lr}),
      ctrl_g_(TreeTemplate::build(cfg_.depth_g, 2 * ctx.dim()), cfg_.ops_g,
              stream_seed(root_seed, "controller", {dim_, 1}), ControllerOptions{20, 64, cfg_.controller_lr}),
      pool_(cfg_.pool_capacity)
{
    cfg_.validate(ctx.n_nodes());
}

void DimensionSearch::run_iteration(std::size_t threads)
{
    if (coarse_done()) return;
    const std::size_t it = next_iteration_;
    const std::size_t M = cfg_.batch;
    std::vector<SampledSequence> sf(M), sg(M);
    for (std::size_t m = 0; m < M; ++m) {
        Rng rng = make_rng(seed_, "sample", {dim_, it, m});
        sf[m] = ctrl_f_.sample(cfg_.epsilon, rng);
        sg[m] = ctrl_g_.sample(cfg_.epsilon, rng);
    }

    std::vector<Candidate> cands(M);
    std::vector<LossCounters> counts(M);
    parallel_for(M, threads, [&](std::size_t m) {
        TuneSeeds seeds{stream_seed(seed_, "init", {dim_, it, m}), stream_seed(seed_, "rbm", {dim_, it, m}),
                        stream_seed(seed_, "validation", {dim_})};
        cands[m] = coarse_tune(*ctx_, cfg_, sf[m].sequence, sg[m].sequence, seeds, counts[m]);
    });

    std::vector<double> scores(M);
    for (std::size_t m = 0; m < M; ++m) {
        scores[m] = cands[m].score;
        scores_.push_back({it, m, scores[m]});
        counters_ += counts[m];
        pool_.insert(std::move(cands[m]));
    }
    ctrl_f_.policy_update(sf, scores, cfg_.nu);
    ctrl_g_.policy_update(sg, scores, cfg_.nu);
    ++next_iteration_;
    if (!pool_.candidates().empty()) {
        log::debug("dim " + std::to_string(dim_) + " iteration " + std::to_string(it) + " best score " +
                   std::to_string(pool_.candidates().front().score));
    }
}

DimensionResult DimensionSearch::finish(std::size_t threads) const
{
    DimensionResult res;
    res.pool = pool_.candidates();
    res.coarse = counters_;
    res.tuned.resize(res.pool.size());
    std::vector<LossCounters> counts(res.pool.size());
    parallel_for(res.pool.size(), threads,
                 [&](std::size_t i) { res.tuned[i] = fine_tune(*ctx_, cfg_, res.pool[i], seed_, counts[i]); });
    for (const auto& c : counts) res.fine += c;
    res.best = select_best(res.tuned);
    return res;
}

nlohmann::json to_json(const Candidate& c)
{
    return {{"e_f", c.e_f},         {"e_g", c.e_g}, {"theta_f", c.theta_f}, {"theta_g", c.theta_g},
            {"loss", std::isfinite(c.loss) ? nlohmann::json(c.loss) : nlohmann::json()},
            {"score", c.score}};
}

Candidate candidate_from_json(const nlohmann::json& j)
{
    Candidate c;
    c.e_f = j.at("e_f").get<OperatorSequence>();
    c.e_g = j.at("e_g").get<OperatorSequence>();
    c.theta_f = j.at("theta_f").get<std::vector<double>>();
    c.theta_g = j.at("theta_g").get<std::vector<double>>();
    c.loss = j.at("loss").is_null() ? std::numeric_limits<double>::infinity() : j.at("loss").get<double>();
    c.score = j.at("score").get<double>();
    return c;
}

nlohmann::json DimensionSearch::checkpoint() const
{
    nlohmann::json pool = nlohmann::json::array();
    for (const auto& c : pool_.candidates()) pool.push_back(to_json(c));
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& r : scores_) scores.push_back({r.iteration, r.candidate, r.score});
    return {{"dim", dim_},
            {"next_iteration", next_iteration_},
            {"controller_f", ctrl_f_.to_json()},
            {"controller_g", ctrl_g_.to_json()},
            {"pool", pool},
            {"scores", scores},
            {"counters", counters_.to_json()}};
}

void DimensionSearch::restore(const nlohmann::json& j)
{
    try {
        if (j.at("dim").get<std::size_t>() != dim_) throw ParameterError("checkpoint belongs to another dimension");
        next_iteration_ = j.at("next_iteration").get<std::size_t>();
        ctrl_f_.load_json(j.at("controller_f"));
        ctrl_g_.load_json(j.at("controller_g"));
        pool_ = Pool(cfg_.pool_capacity);
        for (const auto& c : j.at("pool")) pool_.insert(candidate_from_json(c));
        scores_.clear();
        for (const auto& r : j.at("scores")) {
            scores_.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(), r.at(2).get<double>()});
        }
        counters_ = LossCounters::from_json(j.at("counters"));
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("malformed search checkpoint: ") + e.what());
    }
}

} // namespace netfex
