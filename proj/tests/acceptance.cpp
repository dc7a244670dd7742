// One PASS/FAIL line per acceptance criterion.
// usage: acceptance <scratch dir> [criterion ids...]; 9 reuses the outputs of 2-4
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netfex/controller.hpp"
#include "netfex/dynamics.hpp"
#include "netfex/error.hpp"
#include "netfex/eval.hpp"
#include "netfex/experiment.hpp"
#include "netfex/graph.hpp"
#include "netfex/log.hpp"
#include "netfex/loss.hpp"
#include "netfex/tape.hpp"

using namespace netfex;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

fs::path g_root;

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p)
{
    return json::parse(slurp(p));
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

CommandOptions options(const std::string& name, std::size_t threads, std::uint64_t seed)
{
    CommandOptions o;
    o.out = g_root / name;
    fs::remove_all(o.out);
    o.threads = threads;
    o.seed = seed;
    return o;
}

// -- 1
Outcome smape_table()
{
    TermMap truth{{"x2", -1.0}, {"x3", -1.0}, {"(xj1-xi1)", 0.15}};
    const double two_phase = smape({{"x2", -1.0113}, {"x3", -0.9783}, {"(xj1-xi1)", 0.0973}}, truth);
    const double fex = smape({{"x2", -1.0045}, {"x3", -0.9991}, {"(xj1-xi1)", 0.1431}}, truth);
    const bool ok = std::abs(two_phase - 0.0765) <= 2e-4 && std::abs(fex - 0.0087) <= 2e-4;
    return {ok, "two-phase " + fmt("%.4f", two_phase) + " fex " + fmt("%.4f", fex)};
}

// -- 2
json fixed_structure_config()
{
    return {{"preset", "fhn"},
            {"graph", {{"n", 30}, {"m", 3}}},
            {"simulation", {{"T", 100}, {"dt", 0.01}}},
            {"search",
             {{"fixed_structure", true},
              {"fine_tune_repeats", 5},
              {"fine_tune_nodes", 20},
              {"fine_tune_steps", 20000}}}};
}

Outcome coefficient_recovery()
{
    cmd_search(parse_run_config(fixed_structure_config()), options("c2", 1, 1));
    auto report = read_json(g_root / "c2" / "report.json");
    double worst = 0.0;
    bool ok = true;
    std::string where;
    for (const auto& dj : report["dims"]) {
        for (const char* side : {"f", "g"}) {
            const TermMap got = dj["best"][std::string(side) + "_terms"].get<TermMap>();
            const TermMap want = dj["comparison"]["true_" + std::string(side) + "_terms"].get<TermMap>();
            for (const auto& [term, v] : got) {
                if (!want.count(term)) {
                    ok = false;
                    where += " extra " + term;
                }
            }
            for (const auto& [term, v] : want) {
                auto it = got.find(term);
                const double rel = it == got.end() ? 1.0 : std::abs(it->second - v) / std::abs(v);
                worst = std::max(worst, rel);
            }
        }
    }
    ok = ok && worst < 0.02;
    return {ok, "max relative error " + fmt("%.2e", worst) + where};
}

// -- 3
json discovery_config()
{
    return {{"preset", "fhn"},
            {"graph", {{"n", 30}, {"m", 3}}},
            {"simulation", {{"T", 100}, {"dt", 0.01}}},
            {"data", {{"dims", {0}}}},
            {"search",
             {{"iterations", 100}, {"batch", 10}, {"coarse_steps", 50}, {"bfgs_steps", 10}, {"fine_tune_steps", 5000}}}};
}

Outcome structure_discovery()
{
    const auto cfg = parse_run_config(discovery_config());
    std::string detail;
    bool ok = false;
    for (std::uint64_t seed : {1, 2, 3}) {
        const std::string name = "c3_seed" + std::to_string(seed);
        cmd_search(cfg, options(name, 1, seed));
        const auto dim = read_json(g_root / name / "report.json")["dims"][0];
        const auto& c = dim["comparison"];
        const bool f_ok = c["f_term_set_match"].get<bool>();
        const bool g_ok = c["g_term_set_match"].get<bool>();
        const double s = c["smape"].get<double>();
        const bool hit = f_ok && g_ok && s < 0.05;
        ok = ok || hit;
        detail += " seed" + std::to_string(seed) + "(F " + (f_ok ? "match" : "miss") + ", G " + (g_ok ? "match" : "miss") +
                  ", smape " + fmt("%.3f", s) + ")";
    }
    return {ok, detail.substr(1)};
}

// -- 4
json bench_config()
{
    return {{"preset", "fhn"}, {"bench", {{"sizes", {64, 128, 256, 512}}}}};
}

Outcome rbm_scaling()
{
    cmd_bench_rbm(parse_run_config(bench_config()), options("c4", 1, 1));
    auto t = read_json(g_root / "c4" / "timing.json");
    const double rbm = t["rbm_slope"].get<double>(), full = t["full_slope"].get<double>();
    const bool ok = rbm >= 0.7 && rbm <= 1.3 && full >= 1.7 && full <= 2.3;
    return {ok, "rbm slope " + fmt("%.3f", rbm) + ", full slope " + fmt("%.3f", full)};
}

// -- 5
Outcome gradient_oracle()
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto ops = OperatorSet::standard();
    double worst = 0.0;
    int checked = 0;
    for (int trial = 0; checked < 100; ++trial) {
        if (trial > 10000) return {false, "could not draw finite instances"};
        const std::size_t depth = 1 + static_cast<std::size_t>(trial % 3), d = 1 + static_cast<std::size_t>(trial % 4);
        auto tree = TreeTemplate::build(depth, d);
        OperatorSequence seq(tree.size());
        for (std::size_t i = 0; i < tree.size(); ++i) {
            const auto n = tree.node(i).kind == NodeKind::binary ? ops.binary.size() : ops.unary.size();
            seq[i] = static_cast<std::uint16_t>(rng() % n);
        }
        std::vector<double> theta(tree.n_params());
        for (auto& v : theta) v = u(rng);
        Expression e(tree, ops, seq, theta);
        std::vector<std::vector<double>> xs(10, std::vector<double>(d));
        std::vector<double> ys(10);
        for (auto& x : xs) {
            for (auto& v : x) v = u(rng);
        }
        for (auto& y : ys) y = u(rng);

        auto loss = [&](const std::vector<double>& th, std::vector<double>* grad) {
            auto ex = e.with_theta(th);
            double s = 0.0;
            std::vector<double> g(th.size());
            if (grad) grad->assign(th.size(), 0.0);
            for (std::size_t k = 0; k < 10; ++k) {
                const double v = grad ? value_and_gradient(ex, xs[k], g) : evaluate(ex, xs[k]);
                const double r = v - ys[k];
                s += r * r;
                if (grad) {
                    for (std::size_t q = 0; q < g.size(); ++q) (*grad)[q] += 2.0 * r * g[q];
                }
            }
            return s;
        };
        std::vector<double> grad;
        try {
            if (!(loss(theta, &grad) < 1e8)) continue;
            std::vector<double> fd(theta.size());
            for (std::size_t q = 0; q < theta.size(); ++q) {
                const double h = 1e-5;
                auto tp = theta, tm = theta;
                tp[q] += h;
                tm[q] -= h;
                fd[q] = (loss(tp, nullptr) - loss(tm, nullptr)) / (2 * h);
            }
            ++checked;
            for (std::size_t q = 0; q < theta.size(); ++q) {
                const double scale = std::max({std::abs(fd[q]), std::abs(grad[q]), 1.0});
                worst = std::max(worst, std::abs(fd[q] - grad[q]) / scale);
            }
        } catch (const NumericError&) {
            continue;
        }
    }
    return {worst < 1e-5, "100 draws, max relative error " + fmt("%.2e", worst)};
}

// -- 6
Outcome rbm_equivalence()
{
    double worst = 0.0;
    auto ops = OperatorSet::standard();
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int done = 0;
    for (int trial = 0; done < 20; ++trial) {
        if (trial > 1000) return {false, "could not draw finite instances"};
        const std::size_t n = 20 + 5 * static_cast<std::size_t>(trial % 20);
        auto g = prune_to_directed(generate_ba(n, 3, trial), 0.5, trial);
        auto spec = DynamicsSpec::fhn();
        auto ts = integrate(spec, g, random_initial_state(n, 2, trial), 0.01, 0.5);
        LossContext ctx(g, five_point_derivative(ts), trial % 2, Normalization::in_degree);
        auto draw_expr = [&](std::size_t depth, std::size_t dim) {
            auto tree = TreeTemplate::build(depth, dim);
            OperatorSequence seq(tree.size());
            for (std::size_t i = 0; i < tree.size(); ++i) {
                // non-constant unary operators keep G from collapsing
                seq[i] = static_cast<std::uint16_t>(tree.node(i).kind == NodeKind::binary ? rng() % 3 : 2 + rng() % 9);
            }
            std::vector<double> th(tree.n_params());
            for (auto& v : th) v = u(rng);
            return Expression(tree, ops, seq, th);
        };
        auto f = draw_expr(2, 2);
        auto ge = draw_expr(2, 4);
        const double full = full_loss(ctx, f, ge);
        const double rbm = rbm_loss(ctx, f, ge, n, trial);
        if (!std::isfinite(full)) continue;
        ++done;
        worst = std::max(worst, std::abs(rbm - full) / std::abs(full));
    }
    return {worst <= 1e-10, "20 instances, max relative difference " + fmt("%.2e", worst)};
}

// -- 7
Outcome derivative_order()
{
    auto error_at = [](double dt) {
        const std::size_t n = static_cast<std::size_t>(std::llround(4.0 / dt)) + 1;
        TimeSeries ts(1, 1, n, dt);
        for (std::size_t t = 0; t < n; ++t) ts.at(0, 0, t) = std::sin(dt * static_cast<double>(t));
        auto dd = five_point_derivative(ts);
        double e = 0.0;
        for (std::size_t t = 0; t < dd.derivatives.n_times(); ++t) {
            e = std::max(e, std::abs(dd.derivatives.at(0, 0, t) - std::cos(dd.states.time(t))));
        }
        return e;
    };
    const double e1 = error_at(0.04), e2 = error_at(0.02), e3 = error_at(0.01);
    const double r1 = e1 / e2, r2 = e2 / e3;

    TimeSeries sq(1, 1, 200, 0.01);
    for (std::size_t t = 0; t < 200; ++t) {
        const double x = 0.01 * static_cast<double>(t);
        sq.at(0, 0, t) = x * x;
    }
    auto dq = five_point_derivative(sq);
    double eq = 0.0;
    for (std::size_t t = 0; t < dq.derivatives.n_times(); ++t) {
        eq = std::max(eq, std::abs(dq.derivatives.at(0, 0, t) - 2.0 * dq.states.time(t)));
    }
    const bool ok = r1 >= 12 && r1 <= 20 && r2 >= 12 && r2 <= 20 && eq <= 1e-12;
    return {ok, "ratios " + fmt("%.2f", r1) + ", " + fmt("%.2f", r2) + "; t^2 error " + fmt("%.1e", eq)};
}

// -- 8
Outcome controller_bandit()
{
    OperatorSet ops;
    ops.unary = {UnaryOp::sin, UnaryOp::cos};
    ops.binary = {BinaryOp::add};
    auto tree = TreeTemplate::build(1, 1);
    Controller c(tree, ops, 8);
    Rng rng(80);
    const double before = c.forward()[0][1];
    for (int step = 0; step < 50; ++step) {
        std::vector<SampledSequence> batch;
        std::vector<double> scores;
        for (int m = 0; m < 10; ++m) {
            batch.push_back(c.sample(0.1, rng));
            scores.push_back(batch.back().sequence[0] == 1 ? 0.9 : 0.1);
        }
        c.policy_update(batch, scores, 0.5);
    }
    const double after = c.forward()[0][1];
    return {after - before >= 0.3, "p(high) " + fmt("%.3f", before) + " -> " + fmt("%.3f", after)};
}

// -- 9
Outcome determinism()
{
    std::string detail;
    bool ok = true;
    auto compare = [&](const std::string& label, const std::string& a, const std::string& b) {
        const bool same = !a.empty() && slurp(g_root / a / "report.json") == slurp(g_root / b / "report.json");
        ok = ok && same;
        detail += " " + label + (same ? " identical" : " differs");
    };
    cmd_search(parse_run_config(fixed_structure_config()), options("c9_fixed", 4, 1));
    compare("fixed-structure", "c2", "c9_fixed");
    cmd_search(parse_run_config(discovery_config()), options("c9_search", 4, 1));
    compare("search", "c3_seed1", "c9_search");
    cmd_bench_rbm(parse_run_config(bench_config()), options("c9_bench", 4, 1));
    compare("bench", "c4", "c9_bench");
    return {ok, "threads 1 vs 4:" + detail};
}

} // namespace

int main(int argc, char** argv)
{
    g_root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "netfex_acceptance";
    fs::create_directories(g_root);
    log::init_from_env();

    struct Criterion {
        int id;
        const char* name;
        Outcome (*fn)();
        double budget_s;
    };
    const std::vector<Criterion> criteria{
        {1, "smape table reproduction", smape_table, 1.0},
        {2, "coefficient recovery, fixed structure", coefficient_recovery, 600.0},
        {3, "structure discovery, best of 3 seeds", structure_discovery, 7200.0},
        {4, "rbm scaling slopes", rbm_scaling, 900.0},
        {5, "gradient oracle", gradient_oracle, 60.0},
        {6, "rbm/full equivalence", rbm_equivalence, 60.0},
        {7, "five-point derivative order", derivative_order, 1.0},
        {8, "controller toy bandit", controller_bandit, 10.0},
        {9, "determinism across thread counts", determinism, 7200.0},
    };

    std::vector<int> only;
    for (int a = 2; a < argc; ++a) only.push_back(std::atoi(argv[a]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        if (!pass) ++failures;
        std::printf("criterion %d: %s  %s  [%s; %.2f s of %.0f s%s]\n", c.id, pass ? "PASS" : "FAIL", c.name,
                    o.detail.c_str(), secs, c.budget_s, in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
