#include "netfex/eval.hpp"

#include <cmath>
#include <set>

#include "netfex/error.hpp"

namespace netfex {

TermComparison compare_terms(const TermMap& inferred, const TermMap& truth)
{
    std::set<std::string> keys;
    for (const auto& [k, v] : inferred) {
        if (v != 0.0) keys.insert(k);
    }
    for (const auto& [k, v] : truth) {
        if (v != 0.0) keys.insert(k);
    }
    if (keys.empty()) throw ParameterError("sMAPE is undefined when both term maps are empty");

    TermComparison out;
    double total = 0.0;
    for (const auto& k : keys) {
        TermRow row{k};
        if (auto it = inferred.find(k); it != inferred.end()) row.inferred = it->second;
        if (auto it = truth.find(k); it != truth.end()) row.truth = it->second;
        row.contribution = std::abs(row.inferred - row.truth) / (std::abs(row.inferred) + std::abs(row.truth));
        total += row.contribution;
        out.rows.push_back(row);
    }
    out.smape = total / static_cast<double>(keys.size());
    return out;
}

double smape(const TermMap& inferred, const TermMap& truth)
{
    return compare_terms(inferred, truth).smape;
}

TermMap prune_terms(const TermMap& terms, double tau)
{
    TermMap out;
    for (const auto& [k, v] : terms) {
        if (std::abs(v) >= tau && v != 0.0) out[k] = v;
    }
    return out;
}

TermMap difference_form(const TermMap& g, std::size_t d)
{
    TermMap out = g;
    for (std::size_t k = 1; k <= d; ++k) {
        const std::string xi = "xi" + std::to_string(k), xj = "xj" + std::to_string(k);
        auto it = out.find(xj);
        if (it == out.end()) continue;
        const double cj = it->second;
        out.erase(it);
        out["(" + xj + "-" + xi + ")"] += cj;
        out[xi] += cj;
        if (out[xi] == 0.0) out.erase(xi);
    }
    return out;
}

TermMap pooled_terms(const TermMap& f, const TermMap& g)
{
    TermMap out;
    for (const auto& [k, v] : f) out["F:" + k] = v;
    for (const auto& [k, v] : g) out["G:" + k] = v;
    return out;
}

nlohmann::json to_json(const TermComparison& c)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : c.rows) {
        rows.push_back({{"term", r.term}, {"inferred", r.inferred}, {"true", r.truth}, {"contribution", r.contribution}});
    }
    return {{"terms", rows}, {"smape", c.smape}};
}

namespace {

struct Partial {
    TimeSeries ts;
    std::optional<std::size_t> blow_up;
};

Partial integrate_partial(const DynamicsSpec& spec, const DirectedGraph& g, std::span<const double> x0, double dt,
                          double T)
{
    try {
        return {integrate(spec, g, x0, dt, T), std::nullopt};
    } catch (const BlowUpError& e) {
        // re-run to the last finite sample
        const double reach = dt * static_cast<double>(e.step() - 1);
        if (e.step() <= 1) return {TimeSeries(g.n_nodes(), spec.dim, 1, dt, 0.0, {x0.begin(), x0.end()}), e.step()};
        return {integrate(spec, g, x0, dt, reach), e.step()};
    }
}

} // namespace

RolloutComparison rollout_compare(const DynamicsSpec& inferred, const DynamicsSpec& truth, const DirectedGraph& g,
                                  std::span<const double> x0, double dt, double T)
{
    if (inferred.dim != truth.dim) throw ParameterError("rollout systems have different dimensions");
    auto a = integrate_partial(inferred, g, x0, dt, T);
    auto b = integrate_partial(truth, g, x0, dt, T);
    RolloutStats stats;
    const std::size_t d = truth.dim;
    const std::size_t m = std::min(a.ts.n_times(), b.ts.n_times());
    stats.samples_compared = m;
    if (a.blow_up) {
        stats.blow_up_step = a.blow_up;
        stats.blow_up_side = "inferred";
    } else if (b.blow_up) {
        stats.blow_up_step = b.blow_up;
        stats.blow_up_side = "true";
    }
    stats.max_abs.assign(d, 0.0);
    stats.mean_abs.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i < g.n_nodes(); ++i) {
            for (std::size_t t = 0; t < m; ++t) {
                double e = std::abs(a.ts.at(i, k, t) - b.ts.at(i, k, t));
                sum += e;
                stats.max_abs[k] = std::max(stats.max_abs[k], e);
            }
        }
        stats.mean_abs[k] = sum / static_cast<double>(g.n_nodes() * m);
    }
    return {std::move(stats), std::move(a.ts), std::move(b.ts)};
}

nlohmann::json to_json(const RolloutStats& s)
{
    nlohmann::json j{{"max_abs", s.max_abs}, {"mean_abs", s.mean_abs}, {"samples_compared", s.samples_compared}};
    if (s.blow_up_step) {
        j["blow_up_step"] = *s.blow_up_step;
        j["blow_up_side"] = s.blow_up_side;
    }
    return j;
}

} // namespace netfex
