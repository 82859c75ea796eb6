#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qkzb/cli/generate.hpp"
#include "qkzb/cli/tasks.hpp"

namespace {

int usage_error(const std::string& msg)
{
    std::cerr << "qkzb-lab: " << msg << '\n';
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    using namespace qkzb::cli;
    CLI::App app{"qkzb-lab: numerical laboratory for elliptic hypergeometric solutions of the qKZB equations"};
    std::string task, config_path, csv_dir, profile;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    bool timing = false;
    std::string tasks_help = "one of:";
    for (const auto& t : task_names()) tasks_help += " " + t;
    tasks_help += ", or generate";
    app.add_option("task", task, tasks_help)->required();
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", sets, "override a config field, key=value with a dotted path (repeatable)");
    app.add_option("--csv", csv_dir, "also write one CSV file per value table into DIR");
    app.add_option("--seed", seed, "override the top-level seed");
    app.add_option("--profile", profile, "generate: generic, integral-weights or residue-case");
    app.add_flag("--timing", timing, "add wall-clock time to the report (breaks byte identity)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (task == "generate") {
            if (profile.empty()) return usage_error("generate needs --profile");
            const auto c = generate_params(profile, seed.value_or(1));
            std::cout << config_json(c).dump(2) << '\n';
            return 0;
        }
        if (std::find(task_names().begin(), task_names().end(), task) == task_names().end())
            return usage_error("unknown task '" + task + "'");
        if (config_path.empty()) return usage_error("--config FILE is required");
        RunConfig c = load_config(config_path, sets);
        if (seed) c.seed = *seed;
        const auto t0 = std::chrono::steady_clock::now();
        auto [doc, report] = run_task(task, c);
        if (timing) doc["timing"] = {{"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
        if (!csv_dir.empty()) report.write_csv(csv_dir, task);
        std::cout << doc.dump(2) << '\n';
        return report.pass() ? 0 : 2;
    } catch (const ConfigError& e) {
        return usage_error(e.what());
    } catch (const qkzb::Error& e) {
        return usage_error(e.what());
    }
}
