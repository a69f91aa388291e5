// bwvi: config-driven experiment runner.
//
//   bwvi run <config>      optimize every [method:*] section for every seed
//   bwvi snr <config>      SNR-versus-K sweep from the [snr] section
//   bwvi contour <config>  log-density grids of the target and initial q
//
// Exit status: 0 success, 2 config error, 3 runtime failure.

#include "bwvi/harness/experiment.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

int execute(const std::string& config, bwvi::harness::Command cmd, const bwvi::harness::RunOptions& opts) {
    using namespace bwvi::harness;
    try {
        const ExperimentOutcome out = run_experiment(std::filesystem::path(config), cmd, opts);
        for (const auto& r : out.runs)
            if (r.failure) std::cerr << "bwvi: " << r.method << " seed " << r.seed << " failed: " << *r.failure << '\n';
        std::cout << "wrote " << out.files.size() << " files to " << out.output_dir.string() << '\n';
        return out.ok() ? 0 : 3;
    } catch (const bwvi::ConfigError& e) {
        std::cerr << "bwvi: config error: " << e.what() << '\n';
        return 2;
    } catch (const OutputConflict& e) {
        std::cerr << "bwvi: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "bwvi: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bures-Wasserstein IW-ELBO / VR-IWAE experiments"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    bool force = false;
    int threads = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config, "experiment config file")->required();
        sub->add_option("--seed", seed, "replace the config's seed list with this seed");
        sub->add_option("--out", out, "output directory (overrides output_dir)");
        sub->add_flag("--force", force, "overwrite outputs written by a different config");
        sub->add_option("--threads", threads, "worker threads for independent runs")->check(CLI::PositiveNumber);
    };
    auto* run = app.add_subcommand("run", "run the configured experiment");
    auto* snr = app.add_subcommand("snr", "SNR sweep");
    auto* contour = app.add_subcommand("contour", "contour grids");
    for (auto* sub : {run, snr, contour}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const bwvi::harness::RunOptions opts{seed, out, force, threads};
    if (run->parsed()) return execute(config, bwvi::harness::Command::run, opts);
    if (snr->parsed()) return execute(config, bwvi::harness::Command::snr, opts);
    return execute(config, bwvi::harness::Command::contour, opts);
}
