// slowlight <scenario> --config <path> --out <dir> [--jobs N] [--seed S]

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "slowlight/scenario.hpp"

int main(int argc, char** argv)
{
    namespace sc = slowlight::scenario;
    CLI::App app{"Single-excitation dynamics of atoms moving through a slow-light lattice"};
    app.set_version_flag("--version", std::string(SLOWLIGHT_VERSION));

    std::string scenario, config, out;
    int jobs = 1;
    std::int64_t seed = -1;
    app.add_option("scenario", scenario, "Scenario kind")
        ->required()
        ->check(CLI::IsMember(sc::scenario_kinds()));
    app.add_option("--config", config, "JSON scenario config (or a manifest.json from a previous run)")
        ->required()
        ->check(CLI::ExistingFile);
    app.add_option("--out", out, "Output directory")->required();
    app.add_option("--jobs", jobs, "Worker threads for map-style scenarios")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Override the disorder seed")->check(CLI::NonNegativeNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        const auto doc = sc::load_json(config);
        auto cfg = sc::parse_config(doc, scenario);
        sc::RunOptions opt;
        opt.jobs = jobs;
        if (seed >= 0) opt.seed = static_cast<std::uint64_t>(seed);
        const auto res = sc::run(std::move(cfg), out, opt);
        std::fprintf(stderr, "%s: done in %.2f s, outputs in %s\n", scenario.c_str(), res.wall_seconds, out.c_str());
    } catch (const sc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
