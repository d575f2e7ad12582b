#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pohedge/config.hpp"
#include "pohedge/errors.hpp"
#include "pohedge/io.hpp"
#include "pohedge/scenario.hpp"

namespace fs = std::filesystem;
using namespace pohedge;

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kAcceptance = 3, kNumerical = 4 };

void write_timing(const std::string& dir, const PipelineResult& r, double total) {
    Json t;
    for (const auto& [stage, sec] : r.seconds) t[stage] = sec;
    t["total"] = total;
    write_json((fs::path(dir) / "timing.json").string(), t);
}

int run(const std::string& cmd, const std::string& config, const std::string& out_dir,
        std::optional<std::uint64_t> seed, const std::string& checks) {
    auto start = std::chrono::steady_clock::now();
    auto cfg = load_config(config, seed);
    const std::string dir = out_dir.empty() ? cfg.outputs.dir : out_dir;
    fs::create_directories(dir);
    auto file = [&](const std::string& n) { return (fs::path(dir) / n).string(); };
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    if (cmd == "verify") {
        std::vector<std::string> names;
        if (!checks.empty()) {
            std::stringstream ss(checks);
            std::string n;
            while (std::getline(ss, n, ',')) names.push_back(n);
        }
        auto v = verify(cfg, names);
        std::cout << verify_table(v);
        write_json(file("verify.json"), verify_json(cfg, v));
        Json t;
        for (const auto& c : v.checks) t[c.name] = c.seconds;
        t["total"] = elapsed();
        write_json(file("timing.json"), t);
        return v.pass ? kOk : kAcceptance;
    }

    PipelineOptions opt;
    opt.reuse_dir = dir;
    std::string report_name;
    if (cmd == "simulate") {
        opt.until = Stage::Simulate;
        opt.reuse_dir.clear();
        cfg.outputs.paths = true;
        report_name = "simulate.json";
    } else if (cmd == "filter") {
        opt.until = Stage::Filter;
        cfg.outputs.filters = true;
        report_name = "filter.json";
    } else if (cmd == "price") {
        opt.until = Stage::Price;
        opt.probes = true;
        cfg.outputs.surface = true;
        report_name = "price.json";
    } else if (cmd == "hedge") {
        cfg.outputs.strategies = true;
        report_name = "report.json";
    } else if (cmd == "report") {
        opt.probes = true;
        report_name = "report.json";
    } else {
        throw ConfigError("unknown subcommand '" + cmd + "'");
    }
    auto r = run_pipeline(cfg, opt);
    write_dumps(cfg, r, dir);
    write_json(file(report_name), report_json(cfg, r));
    write_timing(dir, r, elapsed());
    std::cout << cmd << ": wrote " << file(report_name) << " (config_hash " << cfg.hash_hex() << ")\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hedging under partial information: simulate, filter, price, hedge, verify"};
    app.require_subcommand(1, 1);
    std::string config, out_dir, checks;
    std::optional<std::uint64_t> seed;
    for (const char* name : {"simulate", "filter", "price", "hedge", "verify", "report"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "scenario TOML file")->required();
        sub->add_option("--out", out_dir, "output directory (default: [outputs] dir)");
        sub->add_option("--seed", seed, "seed override");
        if (std::string(name) == "verify") sub->add_option("--checks", checks, "comma-separated check names");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        return run(cmd, config, out_dir, seed, checks);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInternal;
    }
}
