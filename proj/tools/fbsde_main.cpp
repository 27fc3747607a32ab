#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fbsde/config.hpp"
#include "fbsde/experiment.hpp"

int main(int argc, char** argv)
{
    using namespace fbsde;

    CLI::App app{"Markovian iteration solver for coupled forward-backward SDEs"};
    app.footer("Config keys (`key = value` per line, '#' starts a comment):\n" +
               config_reference());
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> settings;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    app.add_option("--config", config_path, "configuration file");
    app.add_option("--set", settings, "override one setting, key=value (repeatable)");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--out", out, "output directory");

    std::vector<CLI::App*> commands;
    for (auto const* name :
         {"check", "solve", "bench-sine", "sweep-n", "sweep-m", "oracle-compare"})
        commands.push_back(app.add_subcommand(name));
    commands[0]->description("evaluate the sufficient conditions for the configured bounds");
    commands[1]->description("run the solver on a catalog problem");
    commands[2]->description("sine benchmark against its closed form");
    commands[3]->description("error versus number of time steps");
    commands[4]->description("error versus iteration");
    commands[5]->description("solver versus quadrature oracle (one-dimensional problems)");

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        int const code = app.exit(e);
        return code == 0 ? 0 : exit_invalid_input;
    }

    ExperimentConfig config;
    try
    {
        if (!config_path.empty())
            config = load_config(config_path);
        for (auto const& s : settings)
        {
            auto const eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError("--set expects key=value, got '" + s + "'", 0);
            apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
        }
        if (seed)
            config.seed = *seed;
        if (out)
            apply_setting(config, "out", *out);
        for (auto* sub : commands)
            if (sub->parsed())
                config.command = parse_command(sub->get_name());
    }
    catch (Error const& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_invalid_input;
    }

    if (!config.command)
    {
        std::cerr << "error: no command given\n\n" << app.help();
        return exit_invalid_input;
    }
    return run_experiment(config, std::cout, std::cerr);
}
