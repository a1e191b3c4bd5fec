// prodinv <command> --config <path> [--out <dir>] [--seed <u64>]

#include "prodinv/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    namespace cli = prodinv::cli;

    CLI::App app{"Optimal production-rate control of an M/M/1 production-inventory system"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;

    for (const auto& name : cli::commands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "flat key=value configuration file")->required();
        sub->add_option("--out", out_dir, "output directory (overrides out_dir)");
        sub->add_option("--seed", seed, "base simulation seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::kConfigError;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    cli::RunConfig cfg;
    try {
        cfg = cli::load_config(config_path);
    } catch (const prodinv::Error& e) {
        std::cerr << "prodinv: " << e.what() << '\n';
        return cli::kConfigError;
    }
    const auto* sub = app.get_subcommands().front();
    if (sub->count("--out")) cfg.out_dir = out_dir;
    if (sub->count("--seed")) cfg.seed = seed;

    const cli::RunResult result = cli::run(cfg, command);
    if (result.exit_code != cli::kOk) {
        std::cerr << "prodinv: " << result.message << '\n';
        return result.exit_code;
    }
    for (const auto& name : result.artifacts) std::cout << (std::filesystem::path(cfg.out_dir) / name).string() << '\n';
    return cli::kOk;
}
