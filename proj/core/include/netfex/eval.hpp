#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netfex/dynamics.hpp"
#include "netfex/graph.hpp"
#include "netfex/symbolic.hpp"

namespace netfex {

struct TermRow {
    std::string term;
    double inferred = 0.0;
    double truth = 0.0;
    double contribution = 0.0; // |D - R| / (|D| + |R|)
};

struct TermComparison {
    std::vector<TermRow> rows; // union of nonzero terms, sorted by term string
    double smape = 0.0;
};

/// Throws ParameterError when both maps hold no nonzero term.
TermComparison compare_terms(const TermMap& inferred, const TermMap& truth);
double smape(const TermMap& inferred, const TermMap& truth);

/// Drops terms with |coefficient| < tau.
TermMap prune_terms(const TermMap& terms, double tau);

/// Rewrites the linear part c_i*xik + c_j*xjk of an interaction map as
/// c_j*(xjk-xik) + (c_i + c_j)*xik, so diffusive couplings read as one term.
TermMap difference_form(const TermMap& g, std::size_t d);

/// Union of F and G maps with "F:"/"G:" prefixes, for pooled sMAPE.
TermMap pooled_terms(const TermMap& f, const TermMap& g);

nlohmann::json to_json(const TermComparison& c);

struct RolloutStats {
    std::vector<double> max_abs;  // per dimension
    std::vector<double> mean_abs; // per dimension
    std::size_t samples_compared = 0;
    std::optional<std::size_t> blow_up_step;
    std::string blow_up_side; // "inferred" or "true"
};

struct RolloutComparison {
    RolloutStats stats;
    TimeSeries inferred;
    TimeSeries truth;
};

/// Integrates both systems with identical RK4 settings. A blow-up in
/// either rollout truncates the comparison at the last common sample.
RolloutComparison rollout_compare(const DynamicsSpec& inferred, const DynamicsSpec& truth, const DirectedGraph& g,
                                  std::span<const double> x0, double dt, double T);

nlohmann::json to_json(const RolloutStats& s);

} // namespace netfex
