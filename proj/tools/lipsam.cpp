// lipsam: command-line driver for the bound, training and dereverberation experiments.
//
// Exit codes: 0 success, 1 usage, 2 bound or check violation, 3 divergence.

#include <exception>
#include <functional>
#include <memory>
#include <vector>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lipsam/experiment.hpp"

namespace cli = lipsam::cli;

int main(int argc, char** argv) {
    CLI::App app{"Lipschitz-safe amplitude modifiers: experiments and checks"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand all help");

    std::string config_path;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = ".";
    app.add_option("--config", config_path, "JSON config for the subcommand")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides the config)");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", out_dir, "Directory for output files");

    auto* validate = app.add_subcommand("validate-bounds", "Adversarial Jacobian search against the certified bounds");
    auto* train = app.add_subcommand("train", "Train a denoiser on the synthetic corpus");
    auto* dereverb = app.add_subcommand("dereverb", "Run the plug-and-play solver once");
    auto* sweep = app.add_subcommand("sweep-lambda", "Final SI-SNR over a lambda grid");
    auto* certify = app.add_subcommand("certify", "Empirical vs certified Lipschitz constant of a saved modifier");
    auto* selfcheck = app.add_subcommand("selfcheck", "Oracle checks of the numerical building blocks");
    std::string fault = "none";
    selfcheck->add_option("--inject-fault", fault, "Corrupt a component to exercise failure reporting")
        ->check(CLI::IsMember({"none", "window"}));
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    // Per-command flags override the matching config keys.
    std::vector<std::function<void(nlohmann::json&)>> overrides;
    const auto flag = [&overrides](CLI::App* sub, const std::string& name, const std::string& key, auto sample,
                                   const std::string& help) {
        auto value = std::make_shared<decltype(sample)>();
        auto* opt = sub->add_option(name, *value, help);
        overrides.push_back([opt, key, value](nlohmann::json& j) {
            if (opt->count() > 0) j[key] = *value;
        });
        return opt;
    };
    for (auto* sub : {dereverb, sweep}) {
        flag(sub, "--input", "observation", std::string(), "Observed wav (default: synthetic instance)")
            ->check(CLI::ExistingFile);
        flag(sub, "--rir", "rir", std::string(), "Room impulse response wav")->check(CLI::ExistingFile);
        flag(sub, "--reference", "reference", std::string(), "Clean reference wav for SI-SNR")
            ->check(CLI::ExistingFile);
        flag(sub, "--iters", "iterations", 0, "Solver iterations")->check(CLI::PositiveNumber);
    }
    flag(dereverb, "--lambda", "lambda", 0.0, "Regularization weight")->check(CLI::PositiveNumber);
    flag(dereverb, "--out", "output", std::string(), "Output wav (relative to --out-dir)");
    flag(dereverb, "--trace", "trace", std::string(), "Trace CSV (relative to --out-dir)");
    flag(sweep, "--grid", "grid", std::string(), "Lambda grid: lo:hi:Nlog, lo:hi:Nlin or a comma list");
    flag(train, "--epochs", "epochs", 0, "Training epochs")->check(CLI::NonNegativeNumber);
    flag(train, "--out", "weights", std::string(), "Weight file (relative to --out-dir)");
    std::string arch, lipschitz;
    train->add_option("--arch", arch, "Modifier trained through the loss")->check(CLI::IsMember({"se", "re"}));
    train->add_option("--lipschitz", lipschitz, "Per-step weight normalization")
        ->check(CLI::IsMember({"none", "spectral"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kExitOk : cli::kExitUsage;
    }

    cli::GlobalOptions g;
    if (*seed_opt) g.seed = seed;
    g.threads = threads;
    g.out_dir = out_dir;
    try {
        auto config = cli::load_config(config_path);
        for (const auto& apply : overrides) apply(config);
        if (!arch.empty()) config["kind"] = arch == "se" ? "AM-SE" : "AM-RE";
        if (!lipschitz.empty()) config["spectral"] = lipschitz == "spectral";
        if (*validate) return cli::cmd_validate_bounds(config, g);
        if (*train) return cli::cmd_train(config, g);
        if (*dereverb) return cli::cmd_dereverb(config, g);
        if (*sweep) return cli::cmd_sweep_lambda(config, g);
        if (*certify) return cli::cmd_certify(config, g);
        if (*selfcheck)
            return cli::cmd_selfcheck(config, g,
                                      fault == "window" ? cli::Fault::WindowNormalization : cli::Fault::None);
    } catch (const lipsam::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitUsage;
    }
    return cli::kExitUsage;
}
