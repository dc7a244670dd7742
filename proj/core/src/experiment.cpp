#include "netfex/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "netfex/error.hpp"
#include "netfex/eval.hpp"
#include "netfex/log.hpp"

namespace netfex {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& section)
{
    if (!obj.is_object()) throw ConfigError("'" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& out)
{
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

// null, "inf" and numbers; null means +inf
double read_extended(const json& v)
{
    if (v.is_null()) return std::numeric_limits<double>::infinity();
    if (v.is_string()) {
        auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
        throw ConfigError("expected a number or \"inf\", got '" + s + "'");
    }
    return v.get<double>();
}

json extended(double v)
{
    return std::isinf(v) && v > 0 ? json("inf") : json(v);
}

std::vector<UnaryOp> parse_unary_list(const json& v)
{
    std::vector<UnaryOp> out;
    for (const auto& s : v) out.push_back(parse_unary(s.get<std::string>()));
    return out;
}

std::vector<BinaryOp> parse_binary_list(const json& v)
{
    std::vector<BinaryOp> out;
    for (const auto& s : v) out.push_back(parse_binary(s.get<std::string>()));
    return out;
}

json op_names(const OperatorSet& ops)
{
    json u = json::array(), b = json::array();
    for (auto op : ops.unary) u.push_back(std::string(to_string(op)));
    for (auto op : ops.binary) b.push_back(std::string(to_string(op)));
    return {{"unary", u}, {"binary", b}};
}

void parse_search(const json& s, RunConfig& cfg)
{
    check_keys(s,
               {"iterations", "batch", "coarse_steps", "bfgs_steps", "bfgs_inner_iterations", "fine_tune_steps", "pool_capacity",
                "fine_tune_repeats", "fine_tune_nodes", "tau", "epsilon", "nu", "rbm_batch", "coarse_lr", "bfgs_lr",
                "controller_lr", "fine_tune_lr", "rbm_rescale", "rbm_fixed_partition", "fine_tune_full_neighborhood",
                "depth_f", "depth_g", "unary_f", "binary_f", "unary_g", "binary_g", "fixed_structure",
                "stop_after_iterations"},
               "search");
    auto& c = cfg.search;
    read(s, "iterations", c.iterations);
    read(s, "batch", c.batch);
    read(s, "coarse_steps", c.coarse_steps);
    read(s, "bfgs_steps", c.bfgs_steps);
    read(s, "bfgs_inner_iterations", c.bfgs_inner_iterations);
    read(s, "fine_tune_steps", c.fine_tune_steps);
    read(s, "pool_capacity", c.pool_capacity);
    read(s, "fine_tune_repeats", c.fine_tune_repeats);
    read(s, "fine_tune_nodes", c.fine_tune_nodes);
    read(s, "tau", c.tau);
    read(s, "epsilon", c.epsilon);
    read(s, "nu", c.nu);
    read(s, "rbm_batch", c.rbm_batch);
    read(s, "coarse_lr", c.coarse_lr);
    read(s, "bfgs_lr", c.bfgs_lr);
    read(s, "controller_lr", c.controller_lr);
    read(s, "fine_tune_lr", c.fine_tune_lr);
    read(s, "rbm_rescale", c.rbm_rescale);
    read(s, "rbm_fixed_partition", c.rbm_fixed_partition);
    read(s, "fine_tune_full_neighborhood", c.fine_tune_full_neighborhood);
    read(s, "depth_f", c.depth_f);
    read(s, "depth_g", c.depth_g);
    if (s.contains("unary_f")) c.ops_f.unary = parse_unary_list(s.at("unary_f"));
    if (s.contains("binary_f")) c.ops_f.binary = parse_binary_list(s.at("binary_f"));
    if (s.contains("unary_g")) c.ops_g.unary = parse_unary_list(s.at("unary_g"));
    if (s.contains("binary_g")) c.ops_g.binary = parse_binary_list(s.at("binary_g"));
    read(s, "fixed_structure", cfg.fixed_structure);
    if (s.contains("stop_after_iterations") && !s.at("stop_after_iterations").is_null()) cfg.stop_after_iterations = s.at("stop_after_iterations").get<std::size_t>();
}

} // namespace

RunConfig parse_run_config(const json& j)
{
    try {
        check_keys(j, {"preset", "seed", "dynamics", "graph", "simulation", "corruption", "data", "search", "eval",
                       "robustness", "bench"},
                   "");
        RunConfig cfg;
        read(j, "preset", cfg.preset);
        const Preset p = preset(cfg.preset);
        cfg.kind = p.kind;
        cfg.graph = p.graph;
        cfg.T = p.T;
        cfg.dt = p.dt;
        cfg.search.depth_f = cfg.search.depth_g = p.depth;
        cfg.data.time_stride = p.time_stride;
        read(j, "seed", cfg.seed);

        if (j.contains("dynamics")) {
            const auto& d = j.at("dynamics");
            check_keys(d, {"kind", "params", "normalization"}, "dynamics");
            if (d.contains("kind")) cfg.kind = parse_dynamics_kind(d.at("kind").get<std::string>());
            read(d, "params", cfg.params);
            if (d.contains("normalization") && !d.at("normalization").is_null()) {
                cfg.normalization = parse_normalization(d.at("normalization").get<std::string>());
            }
        }
        if (j.contains("graph")) {
            const auto& g = j.at("graph");
            check_keys(g, {"type", "n", "m", "p", "remove_fraction", "path"}, "graph");
            read(g, "type", cfg.graph.type);
            read(g, "n", cfg.graph.n);
            read(g, "m", cfg.graph.m);
            read(g, "p", cfg.graph.p);
            read(g, "remove_fraction", cfg.graph.remove_fraction);
            read(g, "path", cfg.graph.path);
        }
        if (j.contains("simulation")) {
            const auto& s = j.at("simulation");
            check_keys(s, {"T", "dt"}, "simulation");
            read(s, "T", cfg.T);
            read(s, "dt", cfg.dt);
        }
        if (j.contains("corruption")) {
            const auto& c = j.at("corruption");
            check_keys(c, {"snr_db", "keep_fraction", "perturb", "perturb_fraction"}, "corruption");
            if (c.contains("snr_db")) cfg.corruption.snr_db = read_extended(c.at("snr_db"));
            read(c, "keep_fraction", cfg.corruption.keep_fraction);
            read(c, "perturb", cfg.corruption.perturb);
            read(c, "perturb_fraction", cfg.corruption.perturb_fraction);
            const auto& m = cfg.corruption.perturb;
            if (m != "none" && m != "add" && m != "remove") throw ConfigError("corruption.perturb must be none|add|remove");
        }
        if (j.contains("data")) {
            const auto& d = j.at("data");
            check_keys(d, {"time_stride", "dims", "dir", "interaction_mode"}, "data");
            read(d, "time_stride", cfg.data.time_stride);
            read(d, "dims", cfg.data.dims);
            read(d, "dir", cfg.data.dir);
            if (d.contains("interaction_mode")) {
                auto m = d.at("interaction_mode").get<std::string>();
                if (m == "sparse") {
                    cfg.data.mode = InteractionMode::sparse;
                } else if (m == "dense") {
                    cfg.data.mode = InteractionMode::dense;
                } else {
                    throw ConfigError("data.interaction_mode must be sparse|dense");
                }
            }
        }
        if (j.contains("search")) parse_search(j.at("search"), cfg);
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            check_keys(e, {"rollout_T"}, "eval");
            read(e, "rollout_T", cfg.eval.rollout_T);
        }
        if (j.contains("robustness")) {
            const auto& r = j.at("robustness");
            check_keys(r, {"sweep", "values"}, "robustness");
            read(r, "sweep", cfg.robustness.sweep);
            if (r.contains("values")) {
                cfg.robustness.values.clear();
                for (const auto& v : r.at("values")) cfg.robustness.values.push_back(read_extended(v));
            }
            const auto& s = cfg.robustness.sweep;
            if (s != "downsample" && s != "noise" && s != "perturb_add" && s != "perturb_remove") {
                throw ConfigError("robustness.sweep must be downsample|noise|perturb_add|perturb_remove");
            }
        }
        if (j.contains("bench")) {
            const auto& b = j.at("bench");
            check_keys(b, {"sizes", "m", "T", "dt", "coarse_steps", "bfgs_steps", "repeats"}, "bench");
            read(b, "sizes", cfg.bench.sizes);
            read(b, "m", cfg.bench.m);
            read(b, "T", cfg.bench.T);
            read(b, "dt", cfg.bench.dt);
            read(b, "coarse_steps", cfg.bench.coarse_steps);
            read(b, "bfgs_steps", cfg.bench.bfgs_steps);
            read(b, "repeats", cfg.bench.repeats);
        }
        if (cfg.data.time_stride == 0) throw ConfigError("data.time_stride must be >= 1");
        if (!(cfg.dt > 0.0) || !(cfg.T >= cfg.dt)) throw ConfigError("simulation needs dt > 0 and T >= dt");
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
}

RunConfig load_run_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

ojson RunConfig::to_json() const
{
    const auto& s = search;
    ojson j;
    j["preset"] = preset;
    j["seed"] = seed;
    j["dynamics"] = {{"kind", to_string(kind)},
                     {"params", params},
                     {"normalization", normalization ? json(to_string(*normalization)) : json()}};
    j["graph"] = {{"type", graph.type},     {"n", graph.n}, {"m", graph.m}, {"p", graph.p},
                  {"remove_fraction", graph.remove_fraction}, {"path", graph.path}};
    j["simulation"] = {{"T", T}, {"dt", dt}};
    j["corruption"] = {{"snr_db", extended(corruption.snr_db)},
                       {"keep_fraction", corruption.keep_fraction},
                       {"perturb", corruption.perturb},
                       {"perturb_fraction", corruption.perturb_fraction}};
    j["data"] = {{"time_stride", data.time_stride},
                 {"dims", data.dims},
                 {"dir", data.dir},
                 {"interaction_mode", data.mode == InteractionMode::dense ? "dense" : "sparse"}};
    auto fops = op_names(s.ops_f), gops = op_names(s.ops_g);
    j["search"] = {{"iterations", s.iterations},
                   {"batch", s.batch},
                   {"coarse_steps", s.coarse_steps},
                   {"bfgs_steps", s.bfgs_steps},
                   {"bfgs_inner_iterations", s.bfgs_inner_iterations},
                   {"fine_tune_steps", s.fine_tune_steps},
                   {"pool_capacity", s.pool_capacity},
                   {"fine_tune_repeats", s.fine_tune_repeats},
                   {"fine_tune_nodes", s.fine_tune_nodes},
                   {"tau", s.tau},
                   {"epsilon", s.epsilon},
                   {"nu", s.nu},
                   {"rbm_batch", s.rbm_batch},
                   {"coarse_lr", s.coarse_lr},
                   {"bfgs_lr", s.bfgs_lr},
                   {"controller_lr", s.controller_lr},
                   {"fine_tune_lr", s.fine_tune_lr},
                   {"rbm_rescale", s.rbm_rescale},
                   {"rbm_fixed_partition", s.rbm_fixed_partition},
                   {"fine_tune_full_neighborhood", s.fine_tune_full_neighborhood},
                   {"depth_f", s.depth_f},
                   {"depth_g", s.depth_g},
                   {"unary_f", fops["unary"]},
                   {"binary_f", fops["binary"]},
                   {"unary_g", gops["unary"]},
                   {"binary_g", gops["binary"]},
                   {"fixed_structure", fixed_structure},
                   {"stop_after_iterations", stop_after_iterations ? json(*stop_after_iterations) : json()}};
    j["eval"] = {{"rollout_T", eval.rollout_T}};
    json values = json::array();
    for (double v : robustness.values) values.push_back(extended(v));
    j["robustness"] = {{"sweep", robustness.sweep}, {"values", values}};
    j["bench"] = {{"sizes", bench.sizes},
                  {"m", bench.m},
                  {"T", bench.T},
                  {"dt", bench.dt},
                  {"coarse_steps", bench.coarse_steps},
                  {"bfgs_steps", bench.bfgs_steps},
                  {"repeats", bench.repeats}};
    return j;
}

void write_json(const fs::path& path, const ojson& j)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

// loss stride over the observed grid, keeping the sampling of the original grid
std::size_t effective_stride(const RunConfig& cfg, const Dataset& data)
{
    const double ratio = data.observed.dt() / data.clean.dt();
    const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.data.time_stride) / ratio));
    return std::max<std::size_t>(1, s);
}

LossContext make_context(const RunConfig& cfg, const Dataset& data, const DerivativeData& deriv, std::size_t k)
{
    LossOptions lo;
    lo.time_stride = effective_stride(cfg, data);
    lo.mode = cfg.data.mode;
    return LossContext(data.inference_graph, deriv, k, data.spec.normalization, lo);
}

std::vector<std::size_t> resolve_dims(const RunConfig& cfg, std::size_t d)
{
    if (cfg.data.dims.empty()) {
        std::vector<std::size_t> all(d);
        for (std::size_t k = 0; k < d; ++k) all[k] = k;
        return all;
    }
    for (auto k : cfg.data.dims) {
        if (k >= d) throw ConfigError("data.dims entry " + std::to_string(k) + " out of range");
    }
    return cfg.data.dims;
}

std::string sequence_string(const OperatorSet& ops, const TreeTemplate& tree, const OperatorSequence& e)
{
    std::string s;
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (i) s += ' ';
        s += tree.node(i).kind == NodeKind::binary ? to_string(ops.binary[e[i]]) : to_string(ops.unary[e[i]]);
    }
    return s;
}

json finite_or_null(double v)
{
    return std::isfinite(v) ? json(v) : json();
}

} // namespace

Dataset corrupt(Dataset base, const CorruptionConfig& c, std::uint64_t seed)
{
    Dataset out = std::move(base);
    out.observed = add_noise(out.clean, c.snr_db, stream_seed(seed, "noise"));
    out.observed = downsample(out.observed, c.keep_fraction);
    out.inference_graph = out.graph;
    if (c.perturb != "none" && c.perturb_fraction > 0.0) {
        auto mode = c.perturb == "add" ? PerturbMode::add : PerturbMode::remove;
        out.inference_graph = perturb_links(out.graph, c.perturb_fraction, mode, stream_seed(seed, "perturb"));
    }
    return out;
}

Dataset build_dataset(const RunConfig& cfg, std::uint64_t seed)
{
    Dataset data;
    if (!cfg.data.dir.empty()) {
        const fs::path dir = cfg.data.dir;
        auto meta = read_json_file(dir / "metadata.json");
        data.graph = read_edge_list(dir / "graph.edges");
        data.spec = DynamicsSpec::from_json(meta.at("dynamics"));
        data.x0 = meta.at("x0").get<std::vector<double>>();
        data.clean = read_timeseries_csv(dir / "timeseries.csv", data.spec.dim);
        if (data.clean.n_nodes() != data.graph.n_nodes()) throw IoError("stored series and graph disagree on nodes");
    } else {
        data.graph = build_graph(cfg.graph, seed);
        const std::size_t n = data.graph.n_nodes();
        data.spec = make_dynamics(cfg.kind, cfg.params, n, seed);
        if (cfg.normalization) data.spec.normalization = *cfg.normalization;
        data.x0 = random_initial_state(n, data.spec.dim, stream_seed(seed, "state"));
        data.clean = integrate(data.spec, data.graph, data.x0, cfg.dt, cfg.T);
    }
    return corrupt(std::move(data), cfg.corruption, seed);
}

RunStatus cmd_gen(const RunConfig& cfg, const CommandOptions& opts)
{
    const std::uint64_t seed = opts.seed.value_or(cfg.seed);
    auto data = build_dataset(cfg, seed);
    ensure_dir(opts.out);
    write_edge_list(opts.out / "graph.edges", data.inference_graph);
    write_timeseries_csv(opts.out / "timeseries.csv", data.observed);
    ojson meta;
    meta["dt"] = data.observed.dt();
    meta["d"] = data.spec.dim;
    meta["n_nodes"] = data.graph.n_nodes();
    meta["n_times"] = data.observed.n_times();
    meta["kind"] = to_string(data.spec.kind);
    meta["params"] = data.spec.params;
    meta["seed"] = seed;
    meta["dynamics"] = data.spec.to_json();
    meta["x0"] = data.x0;
    meta["corruption"] = cfg.to_json()["corruption"];
    write_json(opts.out / "metadata.json", meta);
    return RunStatus::completed;
}

DimensionResult fit_reference(const LossContext& ctx, const SearchConfig& cfg, const ReferenceStructure& ref,
                              std::uint64_t seed, std::size_t threads)
{
    (void)threads;
    const std::size_t k = ctx.target_dim();
    DimensionResult res;
    TuneSeeds seeds{stream_seed(seed, "init", {k, 0, 0}), stream_seed(seed, "rbm", {k, 0, 0}),
                    stream_seed(seed, "validation", {k})};
    res.pool.push_back(coarse_tune(ctx, cfg, ref.e_f, ref.e_g, seeds, res.coarse));
    res.tuned.push_back(fine_tune(ctx, cfg, res.pool[0], seed, res.fine));
    res.best = 0;
    return res;
}

ojson dimension_report(const SearchConfig& cfg, std::size_t d, std::size_t dim, const DimensionResult& res,
                       const TermPair* truth)
{
    const auto fnames = self_variable_names(d);
    const auto gnames = interaction_variable_names(d);
    const auto& cand = res.pool[res.best];
    const auto& tuned = res.tuned[res.best];
    Expression f = make_f_expression(cfg, d, cand.e_f, tuned.theta_f);
    Expression g = make_g_expression(cfg, d, cand.e_g, tuned.theta_g);
    TermMap f_terms = prune_terms(to_symbolic(f, fnames), cfg.tau);
    TermMap g_terms = prune_terms(difference_form(to_symbolic(g, gnames), d), cfg.tau);

    ojson j;
    j["dimension"] = dim + 1;
    ojson best;
    best["f"] = to_json(f, fnames);
    best["g"] = to_json(g, gnames);
    best["f_terms"] = f_terms;
    best["g_terms"] = g_terms;
    best["coarse_score"] = cand.score;
    best["fine_tune_loss"] = finite_or_null(tuned.loss);
    best["nonzero_params"] = tuned.nonzero;
    j["best"] = best;
    if (truth != nullptr) {
        TermMap tf = truth->f;
        TermMap tg = prune_terms(difference_form(truth->g, d), 0.0);
        auto cmp = compare_terms(pooled_terms(f_terms, g_terms), pooled_terms(tf, tg));
        ojson c;
        c["true_f_terms"] = tf;
        c["true_g_terms"] = tg;
        auto keys = [](const TermMap& m) {
            std::set<std::string> s;
            for (const auto& [k, v] : m) s.insert(k);
            return s;
        };
        c["f_term_set_match"] = keys(f_terms) == keys(tf);
        c["g_term_set_match"] = keys(g_terms) == keys(tg);
        c["smape"] = cmp.smape;
        c["terms"] = to_json(cmp)["terms"];
        j["comparison"] = c;
    }
    const auto tf = TreeTemplate::build(cfg.depth_f, d);
    const auto tg = TreeTemplate::build(cfg.depth_g, 2 * d);
    ojson pool = ojson::array();
    for (std::size_t i = 0; i < res.pool.size(); ++i) {
        ojson row;
        row["rank"] = i;
        row["e_f"] = sequence_string(cfg.ops_f, tf, res.pool[i].e_f);
        row["e_g"] = sequence_string(cfg.ops_g, tg, res.pool[i].e_g);
        row["coarse_score"] = res.pool[i].score;
        row["coarse_loss"] = finite_or_null(res.pool[i].loss);
        row["fine_tune_loss"] = finite_or_null(res.tuned[i].loss);
        row["nonzero_params"] = res.tuned[i].nonzero;
        pool.push_back(row);
    }
    j["selected"] = res.best;
    j["pool"] = pool;
    j["counters"] = {{"coarse", res.coarse.to_json()}, {"fine_tune", res.fine.to_json()}};
    return j;
}

namespace {

void write_scores(const fs::path& path, const std::vector<ScoreRow>& rows)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << "iter,candidate,score\n";
    char buf[32];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g", r.score);
        out << r.iteration << ',' << r.candidate << ',' << buf << '\n';
    }
}

// Pooled comparison across dimensions, each term tagged with its dimension.
ojson overall_comparison(const ojson& dims)
{
    TermMap inferred, truth;
    for (const auto& dj : dims) {
        if (!dj.contains("comparison")) return nullptr;
        const std::string tag = "dim" + std::to_string(dj["dimension"].get<std::size_t>()) + ":";
        for (const auto& row : dj["comparison"]["terms"]) {
            auto term = tag + row["term"].get<std::string>();
            if (row["inferred"].get<double>() != 0.0) inferred[term] = row["inferred"].get<double>();
            if (row["true"].get<double>() != 0.0) truth[term] = row["true"].get<double>();
        }
    }
    if (inferred.empty() && truth.empty()) return nullptr;
    return compare_terms(inferred, truth).smape;
}

DynamicsSpec inferred_system(const std::vector<SearchConfig>& cfgs, std::size_t d,
                             const std::vector<DimensionResult>& results, Normalization norm)
{
    CustomDynamics dyn;
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& r = results[k];
        const auto& c = r.pool[r.best];
        const auto& t = r.tuned[r.best];
        dyn.f.push_back(make_f_expression(cfgs[k], d, c.e_f, t.theta_f));
        dyn.g.push_back(make_g_expression(cfgs[k], d, c.e_g, t.theta_g));
    }
    return DynamicsSpec::from_expressions(std::move(dyn), norm);
}

} // namespace

RunStatus cmd_search(const RunConfig& cfg, const CommandOptions& opts)
{
    const std::uint64_t seed = opts.seed.value_or(cfg.seed);
    auto data = build_dataset(cfg, seed);
    const std::size_t d = data.spec.dim;
    cfg.search.validate(data.graph.n_nodes());
    const auto dims = resolve_dims(cfg, d);
    const auto deriv = five_point_derivative(data.observed);
    const auto truth = reference_terms(data.spec);

    ensure_dir(opts.out);
    auto snapshot = cfg.to_json();
    snapshot["seed"] = seed;
    write_json(opts.out / "config.json", snapshot);

    std::size_t executed = 0;
    std::vector<DimensionResult> results;
    std::vector<SearchConfig> configs;
    ojson dim_reports = ojson::array();
    for (std::size_t k : dims) {
        LossContext ctx = make_context(cfg, data, deriv, k);
        SearchConfig dim_cfg = cfg.search;
        DimensionResult res;
        if (cfg.fixed_structure) {
            const auto ref = reference_structures(data.spec, cfg.search, true)[k];
            dim_cfg = ref.applied_to(cfg.search);
            res = fit_reference(ctx, dim_cfg, ref, seed, opts.threads);
        } else {
            DimensionSearch search(ctx, cfg.search, seed);
            const auto ckpt = opts.out / ("checkpoint_dim" + std::to_string(k + 1) + ".json");
            const auto scores = opts.out / ("scores_dim" + std::to_string(k + 1) + ".csv");
            if (opts.resume && fs::exists(ckpt)) search.restore(read_json_file(ckpt));
            while (!search.coarse_done()) {
                if (cfg.stop_after_iterations && executed >= *cfg.stop_after_iterations) {
                    write_scores(scores, search.scores());
                    log::info("stopping after " + std::to_string(executed) + " iterations; resume with --resume");
                    return RunStatus::interrupted;
                }
                search.run_iteration(opts.threads);
                ++executed;
                write_json(ckpt, search.checkpoint());
            }
            write_scores(scores, search.scores());
            res = search.finish(opts.threads);
        }
        dim_reports.push_back(dimension_report(dim_cfg, d, k, res, &truth[k]));
        results.push_back(std::move(res));
        configs.push_back(dim_cfg);
    }

    ojson report;
    report["seed"] = seed;
    report["dynamics"] = to_string(data.spec.kind);
    report["n_nodes"] = data.graph.n_nodes();
    report["n_arcs"] = data.inference_graph.n_arcs();
    report["n_times"] = data.observed.n_times();
    report["dims"] = dim_reports;
    report["smape"] = overall_comparison(dim_reports);

    if (cfg.eval.rollout_T > 0.0 && dims.size() == d) {
        std::vector<DimensionResult> ordered(d);
        std::vector<SearchConfig> ordered_cfg(d);
        for (std::size_t q = 0; q < dims.size(); ++q) {
            ordered[dims[q]] = results[q];
            ordered_cfg[dims[q]] = configs[q];
        }
        auto inferred = inferred_system(ordered_cfg, d, ordered, data.spec.normalization);
        auto cmp = rollout_compare(inferred, data.spec, data.graph, data.x0, cfg.dt, cfg.eval.rollout_T);
        write_timeseries_csv(opts.out / "rollout_inferred.csv", cmp.inferred);
        write_timeseries_csv(opts.out / "rollout_true.csv", cmp.truth);
        report["rollout"] = to_json(cmp.stats);
    }
    write_json(opts.out / "report.json", report);
    return RunStatus::completed;
}

RunStatus cmd_robustness(const RunConfig& cfg, const CommandOptions& opts)
{
    const std::uint64_t seed = opts.seed.value_or(cfg.seed);
    RunConfig clean_cfg = cfg;
    clean_cfg.corruption = CorruptionConfig{};
    const Dataset base = build_dataset(clean_cfg, seed);
    const std::size_t d = base.spec.dim;
    cfg.search.validate(base.graph.n_nodes());
    const auto dims = resolve_dims(cfg, d);
    const auto refs = reference_structures(base.spec, cfg.search, true);
    const auto truth = reference_terms(base.spec);
    ensure_dir(opts.out);
    auto snapshot = cfg.to_json();
    snapshot["seed"] = seed;
    write_json(opts.out / "config.json", snapshot);

    ojson rows = ojson::array();
    std::vector<double> pooled;
    for (double v : cfg.robustness.values) {
        CorruptionConfig c = cfg.corruption;
        const auto& sweep = cfg.robustness.sweep;
        if (sweep == "downsample") {
            c.keep_fraction = v;
        } else if (sweep == "noise") {
            c.snr_db = v;
        } else {
            c.perturb = sweep == "perturb_add" ? "add" : "remove";
            c.perturb_fraction = v;
        }
        Dataset data = corrupt(base, c, seed);
        const auto deriv = five_point_derivative(data.observed);
        ojson dim_reports = ojson::array();
        for (std::size_t k : dims) {
            LossContext ctx = make_context(cfg, data, deriv, k);
            const auto dim_cfg = refs[k].applied_to(cfg.search);
            auto res = fit_reference(ctx, dim_cfg, refs[k], seed, opts.threads);
            dim_reports.push_back(dimension_report(dim_cfg, d, k, res, &truth[k]));
        }
        ojson row;
        row["value"] = extended(v);
        ojson per_dim = ojson::array();
        for (const auto& dj : dim_reports) per_dim.push_back(dj["comparison"]["smape"]);
        row["smape_per_dim"] = per_dim;
        row["smape"] = overall_comparison(dim_reports);
        row["dims"] = dim_reports;
        pooled.push_back(row["smape"].get<double>());
        rows.push_back(row);
    }
    bool monotone = true;
    for (std::size_t i = 1; i < pooled.size(); ++i) monotone = monotone && pooled[i] >= pooled[i - 1];

    ojson report;
    report["seed"] = seed;
    report["dynamics"] = to_string(base.spec.kind);
    report["sweep"] = cfg.robustness.sweep;
    report["rows"] = rows;
    report["monotone_non_decreasing"] = monotone;
    write_json(opts.out / "report.json", report);
    return RunStatus::completed;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 2) throw ParameterError("slope fit needs at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

RunStatus cmd_bench_rbm(const RunConfig& cfg, const CommandOptions& opts)
{
    const std::uint64_t seed = opts.seed.value_or(cfg.seed);
    const auto& b = cfg.bench;
    if (b.sizes.size() < 2) throw ConfigError("bench.sizes needs at least two sizes");
    if (b.repeats == 0) throw ConfigError("bench.repeats must be >= 1");
    ensure_dir(opts.out);
    auto snapshot = cfg.to_json();
    snapshot["seed"] = seed;
    write_json(opts.out / "config.json", snapshot);

    struct Row {
        std::size_t n;
        std::string mode;
        double seconds;
        std::uint64_t calls;
        std::uint64_t pairs;
        double loss;
    };
    std::vector<Row> rows;
    for (std::size_t n : b.sizes) {
        GraphRecipe recipe;
        recipe.type = "sf";
        recipe.n = n;
        recipe.m = b.m;
        recipe.remove_fraction = cfg.graph.remove_fraction;
        auto gseed = stream_seed(seed, "bench", {n});
        auto graph = build_graph(recipe, gseed);
        auto spec = DynamicsSpec::fhn(cfg.params);
        auto x0 = random_initial_state(n, spec.dim, stream_seed(gseed, "state"));
        auto ts = integrate(spec, graph, x0, b.dt, b.T);
        auto deriv = five_point_derivative(ts);
        LossContext ctx(graph, deriv, 0, spec.normalization, {1, InteractionMode::dense});
        const auto ref = reference_structures(spec, cfg.search)[0];

        for (const std::string mode : {"rbm", "full"}) {
            SearchConfig sc = cfg.search;
            sc.coarse_steps = b.coarse_steps;
            sc.bfgs_steps = b.bfgs_steps;
            sc.rbm_batch = mode == "rbm" ? std::min(cfg.search.rbm_batch, n) : n;
            LossCounters counters;
            Candidate cand;
            TuneSeeds seeds{stream_seed(gseed, "init"), stream_seed(gseed, "rbm"), stream_seed(gseed, "validation")};
            auto t0 = std::chrono::steady_clock::now();
            for (std::size_t r = 0; r < b.repeats; ++r) cand = coarse_tune(ctx, sc, ref.e_f, ref.e_g, seeds, counters);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rows.push_back({n, mode, secs / static_cast<double>(counters.rbm_calls), counters.rbm_calls / b.repeats,
                            counters.rbm_pairs / counters.rbm_calls, cand.loss});
            log::info("bench N=" + std::to_string(n) + " " + mode + " " + std::to_string(secs) + " s");
        }
    }

    {
        std::ofstream out(opts.out / "bench.csv", std::ios::binary);
        if (!out) throw IoError("cannot write bench.csv");
        out << "N,mode,seconds_per_iter\n";
        char buf[32];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%.6e", r.seconds);
            out << r.n << ',' << r.mode << ',' << buf << '\n';
        }
    }

    ojson report;
    report["seed"] = seed;
    ojson jr = ojson::array();
    for (const auto& r : rows) {
        jr.push_back({{"N", r.n},
                      {"mode", r.mode},
                      {"loss_calls", r.calls},
                      {"pairs_per_call", r.pairs},
                      {"final_loss", finite_or_null(r.loss)}});
    }
    report["rows"] = jr;
    write_json(opts.out / "report.json", report);

    ojson timing;
    for (const std::string mode : {"rbm", "full"}) {
        std::vector<double> xs, ys;
        for (const auto& r : rows) {
            if (r.mode != mode) continue;
            xs.push_back(static_cast<double>(r.n));
            ys.push_back(r.seconds);
        }
        timing[mode + "_slope"] = loglog_slope(xs, ys);
    }
    write_json(opts.out / "timing.json", timing);
    return RunStatus::completed;
}

} // namespace netfex
