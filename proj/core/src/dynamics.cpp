#include "netfex/dynamics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "netfex/error.hpp"
#include "netfex/rng.hpp"

namespace netfex {

TimeSeries::TimeSeries(std::size_t n_nodes, std::size_t d, std::size_t n_times, double dt, double t0)
    : TimeSeries(n_nodes, d, n_times, dt, t0, std::vector<double>(n_nodes * d * n_times, 0.0))
{
}

TimeSeries::TimeSeries(std::size_t n_nodes, std::size_t d, std::size_t n_times, double dt, double t0,
                       std::vector<double> values)
    : n_nodes_(n_nodes), d_(d), n_times_(n_times), dt_(dt), t0_(t0), values_(std::move(values))
{
    if (values_.size() != n_nodes * d * n_times) throw ParameterError("time series value count does not match shape");
    if (!(dt > 0.0)) throw ParameterError("time series dt must be positive");
}

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t count) const
{
    if (begin + count > n_times_) throw ParameterError("time slice out of range");
    TimeSeries out(n_nodes_, d_, count, dt_, time(begin));
    for (std::size_t i = 0; i < n_nodes_; ++i) {
        for (std::size_t k = 0; k < d_; ++k) {
            auto src = channel(i, k);
            std::copy(src.begin() + static_cast<std::ptrdiff_t>(begin),
                      src.begin() + static_cast<std::ptrdiff_t>(begin + count), out.channel(i, k).begin());
        }
    }
    return out;
}

std::string to_string(DynamicsKind kind)
{
    switch (kind) {
    case DynamicsKind::hr: return "hr";
    case DynamicsKind::fhn: return "fhn";
    case DynamicsKind::rossler: return "rossler";
    case DynamicsKind::custom: return "custom";
    }
    return {};
}

DynamicsKind parse_dynamics_kind(const std::string& name)
{
    if (name == "hr") return DynamicsKind::hr;
    if (name == "fhn") return DynamicsKind::fhn;
    if (name == "rossler") return DynamicsKind::rossler;
    if (name == "custom") return DynamicsKind::custom;
    throw ParameterError("unknown dynamics kind '" + name + "'");
}

std::string to_string(Normalization n)
{
    return n == Normalization::in_degree ? "in_degree" : "none";
}

Normalization parse_normalization(const std::string& name)
{
    if (name == "none") return Normalization::none;
    if (name == "in_degree") return Normalization::in_degree;
    throw ParameterError("unknown normalization '" + name + "'");
}

namespace {

void merge(std::map<std::string, double>& params, const std::map<std::string, double>& overrides)
{
    for (const auto& [k, v] : overrides) {
        if (!params.contains(k)) throw ParameterError("unknown dynamics parameter '" + k + "'");
        params[k] = v;
    }
}

double sigmoid(double x)
{
    return 1.0 / (1.0 + std::exp(-x));
}

} // namespace

DynamicsSpec DynamicsSpec::hr(std::map<std::string, double> overrides)
{
    DynamicsSpec s;
    s.kind = DynamicsKind::hr;
    s.dim = 3;
    s.params = {{"a", 1.0},   {"b", 3.0},    {"c", 1.0},    {"u", 5.0},     {"s", 4.0},
                {"r", 0.004}, {"x0", -1.6},  {"eps", 0.15}, {"V_syn", 2.0}, {"I_ext", 3.24}};
    merge(s.params, overrides);
    return s;
}

DynamicsSpec DynamicsSpec::fhn(std::map<std::string, double> overrides)
{
    DynamicsSpec s;
    s.kind = DynamicsKind::fhn;
    s.dim = 2;
    s.params = {{"a", 0.28}, {"b", 0.5}, {"c", -0.04}, {"eps", 1.0}};
    s.normalization = Normalization::in_degree;
    merge(s.params, overrides);
    return s;
}

DynamicsSpec DynamicsSpec::rossler(std::size_t n_nodes, std::uint64_t seed, std::map<std::string, double> overrides)
{
    DynamicsSpec s;
    s.kind = DynamicsKind::rossler;
    s.dim = 3;
    s.params = {{"a", 0.2}, {"b", 0.2}, {"c", -5.7}, {"eps", 0.15}, {"omega_mean", 1.0}, {"omega_std", 0.1}};
    merge(s.params, overrides);
    Rng rng(seed);
    std::normal_distribution<double> normal(s.params["omega_mean"], s.params["omega_std"]);
    s.omega.resize(n_nodes);
    for (auto& w : s.omega) w = normal(rng);
    return s;
}

DynamicsSpec DynamicsSpec::from_expressions(CustomDynamics dyn, Normalization normalization)
{
    DynamicsSpec s;
    s.kind = DynamicsKind::custom;
    s.dim = dyn.f.size();
    s.custom = std::move(dyn);
    s.normalization = normalization;
    return s;
}

double DynamicsSpec::param(const std::string& name) const
{
    auto it = params.find(name);
    if (it == params.end()) throw ParameterError("dynamics parameter '" + name + "' missing");
    return it->second;
}

void DynamicsSpec::validate(std::size_t n_nodes) const
{
    auto require = [&](std::initializer_list<const char*> names) {
        for (const char* n : names) param(n);
    };
    switch (kind) {
    case DynamicsKind::hr:
        require({"a", "b", "c", "u", "s", "r", "x0", "eps", "V_syn", "I_ext"});
        if (dim != 3) throw ParameterError("HR dynamics has dimension 3");
        break;
    case DynamicsKind::fhn:
        require({"a", "b", "c", "eps"});
        if (dim != 2) throw ParameterError("FHN dynamics has dimension 2");
        break;
    case DynamicsKind::rossler:
        require({"a", "b", "c", "eps"});
        if (dim != 3) throw ParameterError("Rossler dynamics has dimension 3");
        if (omega.size() != n_nodes) throw ParameterError("Rossler frequencies do not match node count");
        break;
    case DynamicsKind::custom:
        if (dim == 0 || custom.f.size() != dim || custom.g.size() != dim) {
            throw ParameterError("custom dynamics needs one F and one G expression per dimension");
        }
        for (std::size_t k = 0; k < dim; ++k) {
            if (custom.f[k].input_dim() != dim) throw ParameterError("custom F input dimension mismatch");
            if (custom.g[k].tree().size() != 0 && custom.g[k].input_dim() != 2 * dim) {
                throw ParameterError("custom G input dimension mismatch");
            }
        }
        break;
    }
}

nlohmann::json DynamicsSpec::to_json() const
{
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["dim"] = dim;
    j["params"] = params;
    j["normalization"] = to_string(normalization);
    if (!omega.empty()) j["omega"] = omega;
    if (kind == DynamicsKind::custom) {
        nlohmann::json f = nlohmann::json::array(), g = nlohmann::json::array();
        auto gnames = interaction_variable_names(dim);
        for (const auto& e : custom.f) f.push_back(netfex::to_json(e));
        for (const auto& e : custom.g) g.push_back(e.tree().size() ? netfex::to_json(e, gnames) : nlohmann::json());
        j["f"] = f;
        j["g"] = g;
    }
    return j;
}

DynamicsSpec DynamicsSpec::from_json(const nlohmann::json& j)
{
    try {
        DynamicsSpec s;
        s.kind = parse_dynamics_kind(j.at("kind").get<std::string>());
        s.dim = j.at("dim").get<std::size_t>();
        s.params = j.value("params", std::map<std::string, double>{});
        s.normalization = parse_normalization(j.value("normalization", std::string("none")));
        s.omega = j.value("omega", std::vector<double>{});
        if (s.kind == DynamicsKind::custom) {
            for (const auto& e : j.at("f")) s.custom.f.push_back(expression_from_json(e));
            for (const auto& e : j.at("g")) s.custom.g.push_back(e.is_null() ? Expression{} : expression_from_json(e));
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("malformed dynamics JSON: ") + e.what());
    }
}

void rhs(const DynamicsSpec& spec, const DirectedGraph& g, std::span<const double> state, std::span<double> out)
{
    const std::size_t n = g.n_nodes();
    const std::size_t d = spec.dim;
    if (state.size() != n * d || out.size() != n * d) throw ParameterError("state size does not match graph and dimension");
    for (double v : state) {
        if (!std::isfinite(v)) throw NumericError("non-finite state passed to rhs");
    }
    auto norm = [&](std::size_t i) {
        if (spec.normalization == Normalization::none) return 1.0;
        auto k = g.in_degree(static_cast<NodeId>(i));
        return k == 0 ? 0.0 : 1.0 / static_cast<double>(k);
    };

    switch (spec.kind) {
    case DynamicsKind::hr: {
        const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c"), u = spec.param("u");
        const double s = spec.param("s"), r = spec.param("r"), x0 = spec.param("x0"), eps = spec.param("eps");
        const double vsyn = spec.param("V_syn"), iext = spec.param("I_ext");
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = state.data() + i * d;
            double coupling = 0.0;
            for (NodeId j : g.in_neighbors(static_cast<NodeId>(i))) coupling += sigmoid(state[j * d]);
            double* o = out.data() + i * d;
            o[0] = x[1] - a * x[0] * x[0] * x[0] + b * x[0] * x[0] - x[2] + iext +
                   norm(i) * eps * (vsyn - x[0]) * coupling;
            o[1] = c - u * x[0] * x[0] - x[1];
            o[2] = r * (s * (x[0] - x0) - x[2]);
        }
        break;
    }
    case DynamicsKind::fhn: {
        const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c"), eps = spec.param("eps");
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = state.data() + i * d;
            double coupling = 0.0;
            for (NodeId j : g.in_neighbors(static_cast<NodeId>(i))) coupling += state[j * d] - x[0];
            double* o = out.data() + i * d;
            o[0] = x[0] - x[0] * x[0] * x[0] - x[1] - eps * norm(i) * coupling;
            o[1] = a + b * x[0] + c * x[1];
        }
        break;
    }
    case DynamicsKind::rossler: {
        const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c"), eps = spec.param("eps");
        if (spec.omega.size() != n) throw ParameterError("Rossler frequencies do not match node count");
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = state.data() + i * d;
            double coupling = 0.0;
            for (NodeId j : g.in_neighbors(static_cast<NodeId>(i))) coupling += state[j * d] - x[0];
            double* o = out.data() + i * d;
            const double w = spec.omega[i];
            o[0] = -w * x[1] - x[2] + eps * norm(i) * coupling;
            o[1] = w * x[0] + a * x[1];
            o[2] = b + x[2] * (x[0] + c);
        }
        break;
    }
    case DynamicsKind::custom: {
        std::vector<double> pair(2 * d);
        for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> xi = state.subspan(i * d, d);
            std::copy(xi.begin(), xi.end(), pair.begin());
            for (std::size_t k = 0; k < d; ++k) {
                double v = evaluate(spec.custom.f[k], xi);
                const auto& gk = spec.custom.g[k];
                if (gk.tree().size() != 0) {
                    double coupling = 0.0;
                    for (NodeId j : g.in_neighbors(static_cast<NodeId>(i))) {
                        std::copy(state.begin() + j * d, state.begin() + (j + 1) * d, pair.begin() + d);
                        coupling += evaluate(gk, pair);
                    }
                    v += norm(i) * coupling;
                }
                out[i * d + k] = v;
            }
        }
        break;
    }
    }
}

std::vector<double> rhs(const DynamicsSpec& spec, const DirectedGraph& g, std::span<const double> state)
{
    std::vector<double> out(state.size());
    rhs(spec, g, state, out);
    return out;
}

TimeSeries integrate(const DynamicsSpec& spec, const DirectedGraph& g, std::span<const double> x0, double dt, double T)
{
    if (!(dt > 0.0)) throw ParameterError("integration step must be positive");
    if (!(T >= dt)) throw ParameterError("terminal time must be at least one step");
    spec.validate(g.n_nodes());
    const std::size_t n = g.n_nodes(), d = spec.dim, m = n * d;
    if (x0.size() != m) throw ParameterError("initial state size does not match graph and dimension");

    const auto steps = static_cast<std::size_t>(std::floor(T / dt + 1e-9));
    TimeSeries ts(n, d, steps + 1, dt);
    std::vector<double> x(x0.begin(), x0.end()), k1(m), k2(m), k3(m), k4(m), tmp(m);
    auto record = [&](std::size_t t) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) ts.at(i, k, t) = x[i * d + k];
        }
    };
    record(0);
    for (std::size_t step = 1; step <= steps; ++step) {
        try {
            rhs(spec, g, x, k1);
            for (std::size_t q = 0; q < m; ++q) tmp[q] = x[q] + 0.5 * dt * k1[q];
            rhs(spec, g, tmp, k2);
            for (std::size_t q = 0; q < m; ++q) tmp[q] = x[q] + 0.5 * dt * k2[q];
            rhs(spec, g, tmp, k3);
            for (std::size_t q = 0; q < m; ++q) tmp[q] = x[q] + dt * k3[q];
            rhs(spec, g, tmp, k4);
        } catch (const NumericError&) {
            throw BlowUpError("trajectory became non-finite at step " + std::to_string(step), step);
        }
        for (std::size_t q = 0; q < m; ++q) {
            x[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            if (!(std::abs(x[q]) <= blow_up_guard)) {
                throw BlowUpError("trajectory exceeded the overflow guard at step " + std::to_string(step), step);
            }
        }
        record(step);
    }
    return ts;
}

std::vector<double> random_initial_state(std::size_t n_nodes, std::size_t d, std::uint64_t seed)
{
    Rng rng(seed);
    std::vector<double> x(n_nodes * d);
    for (auto& v : x) v = uniform(rng, -1.0, 1.0);
    return x;
}

TimeSeries add_noise(const TimeSeries& ts, double snr_db, std::uint64_t seed)
{
    if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
        throw ParameterError("SNR must be finite or +inf");
    }
    if (std::isinf(snr_db)) return ts;
    TimeSeries out = ts;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < ts.dim(); ++k) {
        double sum = 0.0, sq = 0.0;
        const double count = static_cast<double>(ts.n_nodes() * ts.n_times());
        for (std::size_t i = 0; i < ts.n_nodes(); ++i) {
            for (double v : ts.channel(i, k)) sum += v;
        }
        const double mean = sum / count;
        for (std::size_t i = 0; i < ts.n_nodes(); ++i) {
            for (double v : ts.channel(i, k)) sq += (v - mean) * (v - mean);
        }
        const double amplitude = std::sqrt(sq / count) * std::pow(10.0, -snr_db / 20.0);
        for (std::size_t i = 0; i < ts.n_nodes(); ++i) {
            for (double& v : out.channel(i, k)) v += amplitude * normal(rng);
        }
    }
    return out;
}

TimeSeries downsample(const TimeSeries& ts, double keep_fraction)
{
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ParameterError("keep fraction must be in (0, 1]");
    const auto stride = static_cast<std::size_t>(std::llround(1.0 / keep_fraction));
    if (stride == 1) return ts;
    const std::size_t kept = (ts.n_times() + stride - 1) / stride;
    if (kept < 5) throw TooShortError("downsampled series has " + std::to_string(kept) + " samples; need at least 5");
    TimeSeries out(ts.n_nodes(), ts.dim(), kept, ts.dt() * static_cast<double>(stride), ts.t0());
    for (std::size_t i = 0; i < ts.n_nodes(); ++i) {
        for (std::size_t k = 0; k < ts.dim(); ++k) {
            for (std::size_t t = 0; t < kept; ++t) out.at(i, k, t) = ts.at(i, k, t * stride);
        }
    }
    return out;
}

DerivativeData five_point_derivative(const TimeSeries& ts)
{
    if (ts.n_times() < 5) throw TooShortError("five-point derivative needs at least 5 samples");
    const std::size_t m = ts.n_times() - 4;
    const double inv = 1.0 / (12.0 * ts.dt());
    TimeSeries deriv(ts.n_nodes(), ts.dim(), m, ts.dt(), ts.time(2));
    for (std::size_t i = 0; i < ts.n_nodes(); ++i) {
        for (std::size_t k = 0; k < ts.dim(); ++k) {
            auto x = ts.channel(i, k);
            auto out = deriv.channel(i, k);
            for (std::size_t t = 0; t < m; ++t) {
                out[t] = (x[t] - 8.0 * x[t + 1] + 8.0 * x[t + 3] - x[t + 4]) * inv;
            }
        }
    }
    return {ts.slice(2, m), std::move(deriv)};
}

std::vector<TermPair> reference_terms(const DynamicsSpec& spec)
{
    std::vector<TermPair> out(spec.dim);
    switch (spec.kind) {
    case DynamicsKind::hr: {
        const double eps = spec.param("eps"), r = spec.param("r"), s = spec.param("s");
        out[0].f = {{"x2", 1.0}, {"x1^3", -spec.param("a")}, {"x1^2", spec.param("b")}, {"x3", -1.0},
                    {"1", spec.param("I_ext")}};
        out[0].g = {{"sigmoid(xj1)", eps * spec.param("V_syn")}, {"xi1*sigmoid(xj1)", -eps}};
        out[1].f = {{"1", spec.param("c")}, {"x1^2", -spec.param("u")}, {"x2", -1.0}};
        out[2].f = {{"x1", r * s}, {"1", -r * s * spec.param("x0")}, {"x3", -r}};
        break;
    }
    case DynamicsKind::fhn: {
        const double eps = spec.param("eps");
        out[0].f = {{"x1", 1.0}, {"x1^3", -1.0}, {"x2", -1.0}};
        out[0].g = {{"xi1", eps}, {"xj1", -eps}};
        out[1].f = {{"1", spec.param("a")}, {"x1", spec.param("b")}, {"x2", spec.param("c")}};
        break;
    }
    case DynamicsKind::rossler: {
        const double eps = spec.param("eps");
        const double w = spec.params.contains("omega_mean") ? spec.param("omega_mean") : 1.0;
        out[0].f = {{"x2", -w}, {"x3", -1.0}};
        out[0].g = {{"xj1", eps}, {"xi1", -eps}};
        out[1].f = {{"x1", w}, {"x2", spec.param("a")}};
        out[2].f = {{"1", spec.param("b")}, {"x1*x3", 1.0}, {"x3", spec.param("c")}};
        break;
    }
    case DynamicsKind::custom: {
        auto fn = self_variable_names(spec.dim);
        auto gn = interaction_variable_names(spec.dim);
        for (std::size_t k = 0; k < spec.dim; ++k) {
            out[k].f = to_symbolic(spec.custom.f[k], fn);
            if (spec.custom.g[k].tree().size() != 0) out[k].g = to_symbolic(spec.custom.g[k], gn);
        }
        break;
    }
    }
    return out;
}

void write_timeseries_csv(const std::filesystem::path& path, const TimeSeries& ts)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << 't';
    for (std::size_t i = 0; i < ts.n_nodes(); ++i) {
        for (std::size_t k = 0; k < ts.dim(); ++k) out << ",x_" << i << '_' << (k + 1);
    }
    out << '\n';
    char buf[32];
    for (std::size_t t = 0; t < ts.n_times(); ++t) {
        std::snprintf(buf, sizeof buf, "%.17g", ts.time(t));
        out << buf;
        for (std::size_t i = 0; i < ts.n_nodes(); ++i) {
            for (std::size_t k = 0; k < ts.dim(); ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", ts.at(i, k, t));
                out << ',' << buf;
            }
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

TimeSeries read_timeseries_csv(const std::filesystem::path& path, std::size_t d)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty time-series file '" + path.string() + "'");
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    if (d == 0 || columns == 0 || columns % d != 0) throw IoError("time-series header does not match dimension");
    const std::size_t n = columns / d;

    std::vector<double> times;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end) {
            double v = 0.0;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc()) throw IoError("malformed number in '" + path.string() + "'");
            row.push_back(v);
            p = next;
            if (p < end && *p == ',') ++p;
        }
        if (row.size() != columns + 1) throw IoError("row width mismatch in '" + path.string() + "'");
        times.push_back(row[0]);
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2) throw IoError("time series needs at least two rows");
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    TimeSeries ts(n, d, rows.size(), dt, times.front());
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) ts.at(i, k, t) = rows[t][1 + i * d + k];
        }
    }
    return ts;
}

} // namespace netfex
