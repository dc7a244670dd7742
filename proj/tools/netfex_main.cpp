#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <thread>

#include "netfex/error.hpp"
#include "netfex/experiment.hpp"
#include "netfex/log.hpp"

namespace {

int exit_code_for(const std::exception_ptr& ep)
{
    try {
        std::rethrow_exception(ep);
    } catch (const netfex::IoError& e) {
        std::fprintf(stderr, "netfex: I/O error: %s\n", e.what());
        return 4;
    } catch (const netfex::BlowUpError& e) {
        std::fprintf(stderr, "netfex: blow-up: %s\n", e.what());
        return 3;
    } catch (const netfex::NumericError& e) {
        std::fprintf(stderr, "netfex: numeric error: %s\n", e.what());
        return 3;
    } catch (const netfex::ConfigError& e) {
        std::fprintf(stderr, "netfex: config error: %s\n", e.what());
        return 2;
    } catch (const netfex::ParameterError& e) {
        std::fprintf(stderr, "netfex: invalid parameter: %s\n", e.what());
        return 2;
    } catch (const netfex::PreconditionError& e) {
        std::fprintf(stderr, "netfex: precondition failed: %s\n", e.what());
        return 2;
    } catch (const netfex::TooShortError& e) {
        std::fprintf(stderr, "netfex: series too short: %s\n", e.what());
        return 2;
    } catch (const netfex::RetriesExhaustedError& e) {
        std::fprintf(stderr, "netfex: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "netfex: %s\n", e.what());
        return 1;
    }
}

} // namespace

int main(int argc, char** argv)
{
    netfex::log::init_from_env();

    CLI::App app{"Network dynamics inference with finite expressions"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    bool resume = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run config (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--seed", seed, "root seed, overrides the config");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    };
    auto* gen = app.add_subcommand("gen", "simulate a network and write graph, series and metadata");
    auto* search = app.add_subcommand("search", "run the expression search and write a report");
    auto* robust = app.add_subcommand("robustness", "fixed-structure sweep over a corruption parameter");
    auto* bench = app.add_subcommand("bench-rbm", "time coarse-tuning with random batches vs full interaction");
    for (auto* sub : {gen, search, robust, bench}) add_common(sub);
    search->add_flag("--resume", resume, "continue from checkpoints in --out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        const auto cfg = netfex::load_run_config(config_path);
        netfex::CommandOptions opts;
        opts.out = out_dir;
        for (auto* sub : {gen, search, robust, bench}) {
            if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed;
        }
        opts.threads = threads;
        opts.resume = resume;

        netfex::RunStatus status = netfex::RunStatus::completed;
        if (gen->parsed()) {
            status = netfex::cmd_gen(cfg, opts);
        } else if (search->parsed()) {
            status = netfex::cmd_search(cfg, opts);
        } else if (robust->parsed()) {
            status = netfex::cmd_robustness(cfg, opts);
        } else {
            status = netfex::cmd_bench_rbm(cfg, opts);
        }
        if (status == netfex::RunStatus::interrupted) std::fprintf(stderr, "netfex: stopped early, checkpoint saved\n");
        return 0;
    } catch (...) {
        return exit_code_for(std::current_exception());
    }
}
