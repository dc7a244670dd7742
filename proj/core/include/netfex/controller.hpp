#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "netfex/expr.hpp"
#include "netfex/optim.hpp"
#include "netfex/rng.hpp"

namespace netfex {

struct SampledSequence {
    OperatorSequence sequence;
    std::vector<double> log_probs; // PMF log-probability of each chosen operator
    std::vector<char> explored;    // drawn by the uniform epsilon branch

    double log_prob() const;
};

struct ControllerOptions {
    std::size_t input_dim = 20;
    std::size_t hidden = 64;
    double lr = 0.002;
};

/// Two-layer policy over operator sequences for one tree template:
/// constant ones -> tanh hidden layer -> one logit slice per tree node.
class Controller {
public:
    Controller(const TreeTemplate& tree, OperatorSet ops, std::uint64_t seed, ControllerOptions opts = {});

    std::size_t output_size() const noexcept { return output_size_; }
    std::size_t n_weights() const noexcept { return weights_.size(); }
    std::span<const double> weights() const noexcept { return weights_; }
    void set_weights(std::span<const double> w);

    /// Per-node probability mass functions in preorder.
    std::vector<std::vector<double>> forward() const;

    SampledSequence sample(double epsilon, Rng& rng) const;
    double log_prob(const OperatorSequence& seq) const;

    /// Risk-seeking policy-gradient ascent step with Adam.
    /// Returns false (and leaves the weights untouched) when every advantage is zero.
    bool policy_update(std::span<const SampledSequence> batch, std::span<const double> scores, double nu);

    nlohmann::json to_json() const;
    void load_json(const nlohmann::json& j);

private:
    std::vector<double> hidden() const;
    std::vector<double> logits(const std::vector<double>& h) const;

    std::vector<std::size_t> slice_begin_; // output offset of each node
    std::vector<std::size_t> slice_size_;
    std::size_t output_size_ = 0;
    ControllerOptions opts_;
    // [W1 (hidden x input), b1, W2 (output x hidden), b2]
    std::vector<double> weights_;
    Adam adam_;
};

/// (1 - nu)-quantile of scores by sorting with linear interpolation.
double quantile_threshold(std::span<const double> scores, double nu);

} // namespace netfex
