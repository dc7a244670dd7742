#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "netfex/dynamics.hpp"
#include "netfex/graph.hpp"
#include "netfex/presets.hpp"
#include "netfex/search.hpp"

namespace netfex {

struct CorruptionConfig {
    double snr_db = std::numeric_limits<double>::infinity();
    double keep_fraction = 1.0;
    std::string perturb = "none"; // none | add | remove
    double perturb_fraction = 0.0;
};

struct DataConfig {
    std::size_t time_stride = 1;
    std::vector<std::size_t> dims; // empty: every dimension
    std::string dir;               // load gen output instead of simulating
    InteractionMode mode = InteractionMode::sparse;
};

struct EvalConfig {
    double rollout_T = 0.0;
};

struct RobustnessConfig {
    std::string sweep = "downsample"; // downsample | noise | perturb_add | perturb_remove
    std::vector<double> values{1.0, 0.1, 0.05};
};

struct BenchConfig {
    std::vector<std::size_t> sizes{64, 128, 256, 512};
    std::size_t m = 3;
    double T = 1.0;
    double dt = 0.01;
    std::size_t coarse_steps = 20;
    std::size_t bfgs_steps = 5;
    std::size_t repeats = 1;
};

/// Parsed run description. Unknown keys anywhere are rejected with ConfigError.
struct RunConfig {
    std::string preset = "fhn";
    std::uint64_t seed = 0;
    DynamicsKind kind = DynamicsKind::fhn;
    std::map<std::string, double> params;
    std::optional<Normalization> normalization;
    GraphRecipe graph;
    double T = 100.0;
    double dt = 0.01;
    CorruptionConfig corruption;
    DataConfig data;
    SearchConfig search;
    bool fixed_structure = false;
    std::optional<std::size_t> stop_after_iterations;
    EvalConfig eval;
    RobustnessConfig robustness;
    BenchConfig bench;

    /// Normalized snapshot (every field, defaults filled in).
    nlohmann::ordered_json to_json() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct CommandOptions {
    std::filesystem::path out;
    std::optional<std::uint64_t> seed; // overrides the config seed
    std::size_t threads = 1;
    bool resume = false;
};

struct Dataset {
    DirectedGraph graph;           // topology that generated the data
    DirectedGraph inference_graph; // topology handed to the search (maybe perturbed)
    DynamicsSpec spec;
    std::vector<double> x0;
    TimeSeries clean;
    TimeSeries observed; // after noise and downsampling
};

/// Simulates (or loads from cfg.data.dir) and applies corruption.
Dataset build_dataset(const RunConfig& cfg, std::uint64_t seed);
/// Applies noise / downsampling / link perturbation to an existing clean dataset.
Dataset corrupt(Dataset base, const CorruptionConfig& c, std::uint64_t seed);

/// Report of one output dimension; inferred vs true terms when truth is known.
nlohmann::ordered_json dimension_report(const SearchConfig& cfg, std::size_t d, std::size_t dim,
                                        const DimensionResult& res, const TermPair* truth);

/// Fixed-structure pipeline: coarse-tune the reference sequences, then fine-tune.
DimensionResult fit_reference(const LossContext& ctx, const SearchConfig& cfg, const ReferenceStructure& ref,
                              std::uint64_t seed, std::size_t threads);

enum class RunStatus { completed, interrupted };

RunStatus cmd_gen(const RunConfig& cfg, const CommandOptions& opts);
RunStatus cmd_search(const RunConfig& cfg, const CommandOptions& opts);
RunStatus cmd_robustness(const RunConfig& cfg, const CommandOptions& opts);
RunStatus cmd_bench_rbm(const RunConfig& cfg, const CommandOptions& opts);

/// Least-squares slope of log(y) on log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

} // namespace netfex
