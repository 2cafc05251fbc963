#include <algorithm>
#include <iostream>
#include <map>
#include <vector>

#include <CLI11.hpp>

#include "invprob/cli.hpp"

namespace invprob::cli {

int main_entry(int argc, char** argv) {
    CLI::App app("Linear inverse problems by truncated SVD and maximum entropy: spectral benchmark runs.");
    app.footer(
        "Commands:\n"
        "  generate    write benchmark data\n"
        "  solve       generate data and reconstruct it with --solver\n"
        "  sweep       solve over --cutoffs (svd solvers) or --alphas (MEM solvers) and --sweep-seeds seeds\n"
        "  resolution  delta-pair resolution scan over --betas and --deltas\n"
        "Every key of the key=value config file is also a flag; flags override the file.");

    std::string command;
    app.add_option("command", command, "generate | solve | sweep | resolution");
    std::string config_path;
    app.add_option("--config", config_path, "key=value configuration file (a run manifest works too)");
    bool force = false;
    app.add_flag("--force", force, "overwrite an existing run directory");

    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    for (const auto& key : config_keys()) {
        if (key == "command") {
            continue;
        }
        std::string dashed = key;
        std::replace(dashed.begin(), dashed.end(), '_', '-');
        const std::string names = dashed == key ? "--" + key : "--" + dashed + ",--" + key;
        options[key] = app.add_option(names, values[key]);
    }

    // Unknown flags go to the resolver so they are reported together with other problems.
    app.allow_extras();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        RawConfig file;
        if (!config_path.empty()) {
            file = read_config_file(config_path);
        }
        RawConfig flags;
        for (const auto& [key, opt] : options) {
            if (opt->count() > 0) {
                flags[key] = values[key];
            }
        }
        std::vector<std::string> stray;
        const auto extras = app.remaining();
        for (std::size_t i = 0; i < extras.size(); ++i) {
            const std::string& token = extras[i];
            if (token.rfind("--", 0) != 0) {
                stray.push_back("argument '" + token + "': unexpected");
                continue;
            }
            std::string key = token.substr(2);
            std::string value;
            if (const auto eq = key.find('='); eq != std::string::npos) {
                value = key.substr(eq + 1);
                key = key.substr(0, eq);
            } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
                value = extras[++i];
            }
            std::replace(key.begin(), key.end(), '-', '_');
            flags[key] = value;
        }
        RunConfig config;
        try {
            config = resolve_config(command.empty() ? std::nullopt : std::optional<std::string>(command), file,
                                    flags);
        } catch (const ConfigError& e) {
            auto issues = e.issues();
            issues.insert(issues.end(), stray.begin(), stray.end());
            throw ConfigError(issues);
        }
        if (!stray.empty()) {
            throw ConfigError(stray);
        }
        config.force = force;
        const auto dir = run(config, std::cerr);
        std::cout << dir.string() << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const RunError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace invprob::cli
