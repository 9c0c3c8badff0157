// Batch front-end: bailout <command> --config <file> [--seed N] [--out DIR]
// [--threads N]. One run = one process; see README for the config schema.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "bailout/config.hpp"
#include "bailout/run.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bailout::ConfigError("CONFIG_FILE_NOT_FOUND", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo solver for bail-out dividend barriers"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    long long seed_override = -1;
    int threads = 0;

    for (const char* name : {"solve-single", "solve-map", "g-curve", "sweep-barrier",
                             "oracle-check", "paths"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "flat key = value config file")->required();
        sub->add_option("--seed", seed_override, "override mc.seed");
        sub->add_option("--out", out_dir, "output directory (default: out)");
        sub->add_option("--threads", threads,
                        "worker threads (default: BAILOUT_THREADS or hardware)");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        const std::string command = app.get_subcommands().front()->get_name();
        bailout::RunConfig cfg =
            bailout::parse_config(read_file(config_path), bailout::parse_command(command));
        if (seed_override >= 0) {
            cfg.mc.seed = static_cast<std::uint64_t>(seed_override);
            cfg.echo["mc.seed"] = std::to_string(cfg.mc.seed);
        }
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.threads = threads;
        return bailout::run(cfg);
    } catch (const bailout::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bailout::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return bailout::kExitSolver;
    }
}
