#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "netfex/controller.hpp"
#include "netfex/expr.hpp"
#include "netfex/loss.hpp"

namespace netfex {

struct SearchConfig {
    std::size_t iterations = 300;    // T
    std::size_t batch = 10;          // M
    std::size_t coarse_steps = 100;  // T1, Adam
    std::size_t bfgs_steps = 20;     // T2
    std::size_t bfgs_inner_iterations = 20; // quasi-Newton iterations per T2 step
    std::size_t fine_tune_steps = 20000; // T3
    std::size_t pool_capacity = 15;  // K
    std::size_t fine_tune_repeats = 5; // L
    std::size_t fine_tune_nodes = 20;  // S
    double tau = 0.01;
    double epsilon = 0.1;
    double nu = 0.5;
    std::size_t rbm_batch = 32;
    double coarse_lr = 0.001;
    double bfgs_lr = 1.0;
    double controller_lr = 0.002;
    double fine_tune_lr = 0.001;
    bool rbm_rescale = false;
    bool rbm_fixed_partition = false;
    bool fine_tune_full_neighborhood = true;
    std::size_t depth_f = 3;
    std::size_t depth_g = 3;
    OperatorSet ops_f = OperatorSet::standard();
    OperatorSet ops_g = OperatorSet::standard();

    /// Throws ParameterError on zero counts or S > n_nodes.
    void validate(std::size_t n_nodes) const;
};

struct LossCounters {
    std::uint64_t rbm_calls = 0;
    std::uint64_t rbm_pairs = 0;
    std::uint64_t full_calls = 0;
    std::uint64_t full_pairs = 0;

    LossCounters& operator+=(const LossCounters& o);
    nlohmann::json to_json() const;
    static LossCounters from_json(const nlohmann::json& j);
};

struct Candidate {
    OperatorSequence e_f;
    OperatorSequence e_g;
    std::vector<double> theta_f;
    std::vector<double> theta_g;
    double loss = std::numeric_limits<double>::infinity();
    double score = 0.0; // 1 / (1 + loss), 0 on numeric failure
};

/// Keeps the K best candidates by score, one entry per (e_f, e_g).
class Pool {
public:
    explicit Pool(std::size_t capacity = 15);

    /// Returns true when the pool changed.
    bool insert(Candidate c);
    const std::vector<Candidate>& candidates() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }

private:
    std::size_t capacity_;
    std::vector<Candidate> items_;
};

double score_from_loss(double loss);

/// Trees used for one output dimension of a d-dimensional system.
Expression make_f_expression(const SearchConfig& cfg, std::size_t d, OperatorSequence e, std::vector<double> theta);
Expression make_g_expression(const SearchConfig& cfg, std::size_t d, OperatorSequence e, std::vector<double> theta);

/// alpha ~ U[-0.5, 0.5], beta = 0.
std::vector<double> initial_theta(const TreeTemplate& tree, Rng& rng);

struct TuneSeeds {
    std::uint64_t init = 0;
    std::uint64_t rbm = 0;
    std::uint64_t validation = 0;
};

/// T1 Adam steps then up to T2 BFGS steps on the random-batch loss, scored
/// on a fixed validation partition. Numeric failures yield score 0.
/// If theta is supplied it replaces the random initialization.
Candidate coarse_tune(const LossContext& ctx, const SearchConfig& cfg, OperatorSequence e_f, OperatorSequence e_g,
                      const TuneSeeds& seeds, LossCounters& counters,
                      const std::optional<std::pair<std::vector<double>, std::vector<double>>>& theta = std::nullopt);

struct FineTuned {
    std::vector<double> theta_f;
    std::vector<double> theta_g;
    double loss = std::numeric_limits<double>::infinity(); // full-graph loss at the averaged theta
    std::size_t nonzero = 0;
};

/// L runs of T3 cosine-decayed Adam steps on S sampled nodes, each filtered
/// at tau, averaged elementwise.
FineTuned fine_tune(const LossContext& ctx, const SearchConfig& cfg, const Candidate& cand, std::uint64_t root_seed,
                    LossCounters& counters);

/// Smallest loss; ties go to fewer nonzero parameters, then lower index.
std::size_t select_best(const std::vector<FineTuned>& tuned);

struct ScoreRow {
    std::size_t iteration = 0;
    std::size_t candidate = 0;
    double score = 0.0;
};

struct DimensionResult {
    std::vector<Candidate> pool;
    std::vector<FineTuned> tuned; // aligned with pool
    std::size_t best = 0;
    LossCounters coarse;
    LossCounters fine;
};

/// Controller-driven search over (F, G) operator sequences for the output
/// dimension of `ctx`. Every random draw comes from a stream keyed by the
/// root seed, the dimension, the iteration and the sample index.
class DimensionSearch {
public:
    DimensionSearch(const LossContext& ctx, SearchConfig cfg, std::uint64_t root_seed);

    std::size_t next_iteration() const noexcept { return next_iteration_; }
    bool coarse_done() const noexcept { return next_iteration_ >= cfg_.iterations; }

    /// Sample M pairs, coarse-tune them (concurrently), update pool and controllers.
    void run_iteration(std::size_t threads);
    /// Fine-tune every pool candidate and pick the best.
    DimensionResult finish(std::size_t threads) const;

    const Pool& pool() const noexcept { return pool_; }
    const std::vector<ScoreRow>& scores() const noexcept { return scores_; }
    const LossCounters& counters() const noexcept { return counters_; }
    const Controller& controller_f() const noexcept { return ctrl_f_; }
    const Controller& controller_g() const noexcept { return ctrl_g_; }

    nlohmann::json checkpoint() const;
    void restore(const nlohmann::json& j);

private:
    const LossContext* ctx_;
    SearchConfig cfg_;
    std::uint64_t seed_;
    std::size_t dim_;
    Controller ctrl_f_;
    Controller ctrl_g_;
    Pool pool_;
    std::vector<ScoreRow> scores_;
    LossCounters counters_;
    std::size_t next_iteration_ = 0;
};

nlohmann::json to_json(const Candidate& c);
Candidate candidate_from_json(const nlohmann::json& j);

} // namespace netfex
