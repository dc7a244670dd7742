#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netfex/expr.hpp"
#include "netfex/graph.hpp"
#include "netfex/symbolic.hpp"

namespace netfex {

/// Node activity sampled on a regular grid. values[(node * d + dim) * n_times + t].
class TimeSeries {
public:
    TimeSeries() = default;
    TimeSeries(std::size_t n_nodes, std::size_t d, std::size_t n_times, double dt, double t0 = 0.0);
    TimeSeries(std::size_t n_nodes, std::size_t d, std::size_t n_times, double dt, double t0,
               std::vector<double> values);

    std::size_t n_nodes() const noexcept { return n_nodes_; }
    std::size_t dim() const noexcept { return d_; }
    std::size_t n_times() const noexcept { return n_times_; }
    double dt() const noexcept { return dt_; }
    double t0() const noexcept { return t0_; }
    double time(std::size_t t) const noexcept { return t0_ + dt_ * static_cast<double>(t); }

    double& at(std::size_t node, std::size_t dim, std::size_t t) { return values_[index(node, dim, t)]; }
    double at(std::size_t node, std::size_t dim, std::size_t t) const { return values_[index(node, dim, t)]; }
    /// Contiguous samples of one (node, dim) channel.
    std::span<const double> channel(std::size_t node, std::size_t dim) const
    {
        return {values_.data() + index(node, dim, 0), n_times_};
    }
    std::span<double> channel(std::size_t node, std::size_t dim)
    {
        return {values_.data() + index(node, dim, 0), n_times_};
    }
    std::span<const double> values() const noexcept { return values_; }

    /// Slice [begin, begin + count) of the time axis.
    TimeSeries slice(std::size_t begin, std::size_t count) const;

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

private:
    std::size_t index(std::size_t node, std::size_t dim, std::size_t t) const noexcept
    {
        return (node * d_ + dim) * n_times_ + t;
    }

    std::size_t n_nodes_ = 0;
    std::size_t d_ = 0;
    std::size_t n_times_ = 0;
    double dt_ = 0.0;
    double t0_ = 0.0;
    std::vector<double> values_;
};

enum class DynamicsKind { hr, fhn, rossler, custom };
enum class Normalization { none, in_degree };

std::string to_string(DynamicsKind kind);
DynamicsKind parse_dynamics_kind(const std::string& name);
std::string to_string(Normalization n);
Normalization parse_normalization(const std::string& name);

/// Per output dimension: f over R^d, g over (x_i, x_j) in R^{2d}. A g with
/// no value (empty optional-like: default Expression) contributes nothing.
struct CustomDynamics {
    std::vector<Expression> f;
    std::vector<Expression> g;
};

struct DynamicsSpec {
    DynamicsKind kind = DynamicsKind::fhn;
    std::size_t dim = 2;
    std::map<std::string, double> params;
    Normalization normalization = Normalization::none;
    std::vector<double> omega; // Rossler natural frequencies, one per node
    CustomDynamics custom;

    /// Defaults a=1, b=3, c=1, u=5, s=4, r=0.004, x0=-1.6, eps=0.15, V_syn=2, I_ext=3.24.
    static DynamicsSpec hr(std::map<std::string, double> overrides = {});
    /// Defaults a=0.28, b=0.5, c=-0.04, eps=1, in-degree normalization.
    static DynamicsSpec fhn(std::map<std::string, double> overrides = {});
    /// Defaults a=0.2, b=0.2, c=-5.7, eps=0.15; omega_i ~ N(omega_mean=1, omega_std=0.1).
    static DynamicsSpec rossler(std::size_t n_nodes, std::uint64_t seed, std::map<std::string, double> overrides = {});
    static DynamicsSpec from_expressions(CustomDynamics dyn, Normalization normalization);

    double param(const std::string& name) const;
    /// Throws ParameterError if a required parameter is missing or sizes disagree with n_nodes.
    void validate(std::size_t n_nodes) const;

    nlohmann::json to_json() const;
    static DynamicsSpec from_json(const nlohmann::json& j);
};

/// dx/dt for every node; state and result are row-major n_nodes x d.
std::vector<double> rhs(const DynamicsSpec& spec, const DirectedGraph& g, std::span<const double> state);
void rhs(const DynamicsSpec& spec, const DirectedGraph& g, std::span<const double> state, std::span<double> out);

inline constexpr double blow_up_guard = 1e8;

/// Fixed-step RK4 from x0 (row-major n_nodes x d); floor(T/dt) + 1 samples.
TimeSeries integrate(const DynamicsSpec& spec, const DirectedGraph& g, std::span<const double> x0, double dt, double T);

/// i.i.d. uniform [-1, 1] initial state, row-major n_nodes x d.
std::vector<double> random_initial_state(std::size_t n_nodes, std::size_t d, std::uint64_t seed);

/// x + a * N(0, 1) with a = sigma_dim * 10^(-snr_db / 20). snr_db = +inf is the identity.
TimeSeries add_noise(const TimeSeries& ts, double snr_db, std::uint64_t seed);

/// Keeps every round(1/keep_fraction)-th sample.
TimeSeries downsample(const TimeSeries& ts, double keep_fraction);

struct DerivativeData {
    TimeSeries states;      // interior slice aligned with derivatives
    TimeSeries derivatives; // five-point estimates
};

/// (x[t-2] - 8x[t-1] + 8x[t+1] - x[t+2]) / (12 dt) for t = 2 .. T_s - 3.
DerivativeData five_point_derivative(const TimeSeries& ts);

/// Ground-truth term maps of one output dimension, named x1.. for F and
/// xi1.., xj1.. for G. Rossler frequencies enter as their mean.
struct TermPair {
    TermMap f;
    TermMap g;
};
std::vector<TermPair> reference_terms(const DynamicsSpec& spec);

/// Header "t,x_<node>_<dim>,..." with 0-based nodes and 1-based dims.
void write_timeseries_csv(const std::filesystem::path& path, const TimeSeries& ts);
TimeSeries read_timeseries_csv(const std::filesystem::path& path, std::size_t d);

} // namespace netfex
