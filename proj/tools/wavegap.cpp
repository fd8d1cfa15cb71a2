#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wavegap/config.hpp"
#include "wavegap/pipeline.hpp"

using namespace wavegap;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void emit(Pipeline& p, const fs::path& dir, const std::string& name, const StageResult& r)
{
    write_json(dir / name, r.json);
    for (const auto& c : p.csv()) write_csv(dir / c.name, c.header, c.columns);
    p.csv().clear();
}

int run(const Options& o, const std::function<int(Pipeline&, const fs::path&)>& body)
{
    try {
        PipelineConfig cfg = load_config(o.config);
        if (o.seed) {
            cfg.sde.seed = *o.seed;
            cfg.gap.seed = *o.seed;
        }
        fs::path dir = o.out.empty() ? fs::path(cfg.output_dir) : fs::path(o.out);
        Pipeline p(cfg);
        return body(p, dir);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_error;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_error;
    }
}

int report_all(Pipeline& p, const fs::path& dir)
{
    Json report = p.header("report");
    int status = exit_ok;
    bool failed = false;
    auto stage = [&](const std::string& key, const std::string& file, auto&& fn) {
        try {
            StageResult r = fn();
            emit(p, dir, file, r);
            report["stages"][key] = Json{{"status", r.status}, {"file", file}};
            status = std::max(status, r.status);
        } catch (const std::exception& e) {
            report["stages"][key] = Json{{"status", int(exit_error)}, {"error", e.what()}};
            p.csv().clear();
            failed = true;
        }
    };
    stage("wave", "wave.json", [&] { return p.wave_solve(); });
    stage("spectrum", "spectral.json", [&] { return p.wave_spectrum(); });
    stage("gap", "gap.json", [&] { return p.gap_certify(); });
    stage("small_c", "smallc.json", [&] { return p.gap_small_c(); });
    if (p.system().gain) {
        // the explicit bounds exist only for the two-sided exponential kernel
        if (p.config().model.kernel == "exponential") stage("speed", "speed.json", [&] { return p.speed(); });
        if (p.config().sde.present) stage("sde", "sde.json", [&] { return p.sde_run(); });
    }
    if (failed) status = exit_error;
    report["status"] = status;
    write_json(dir / "report.json", report);
    return status;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Traveling waves of nonlocal bistable equations: solver, stability certificates, noise ensembles"};
    app.set_version_flag("--version", WAVEGAP_VERSION);
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;

    auto common = [&](CLI::App* c) {
        c->add_option("--config", o.config, "run configuration (INI)")->required()->check(CLI::ExistingFile);
        c->add_option("--seed", seed, "overrides every seed of the configuration");
        c->add_option("--out", o.out, "output directory (default: [output] dir)");
    };
    auto group = [&](const std::string& name, const std::string& help) {
        auto* g = app.add_subcommand(name, help);
        g->require_subcommand(1);
        return g;
    };

    auto* wave = group("wave", "traveling-wave solution and spectral data");
    auto* wave_solve = wave->add_subcommand("solve", "solve for the wave profile and speed");
    auto* wave_spectrum = wave->add_subcommand("spectrum", "adjoint eigenfunction, densities and identities");
    auto* gap = group("gap", "spectral-gap certificates");
    auto* gap_certify = gap->add_subcommand("certify", "general certificate via the Markov-kernel contraction");
    auto* gap_small = gap->add_subcommand("small-c", "certificate for slow waves of the symmetrizable case");
    auto* speed = group("speed", "wave-speed estimates");
    auto* speed_bounds_cmd = speed->add_subcommand("bounds", "explicit speed bounds against the solver");
    auto* sde = group("sde", "stochastic stability");
    auto* sde_run = sde->add_subcommand("run", "Monte Carlo escape ensemble with phase tracking");
    auto* report = group("report", "full pipeline");
    auto* report_all_cmd = report->add_subcommand("all", "run every applicable stage");
    for (auto* c : {wave_solve, wave_spectrum, gap_certify, gap_small, speed_bounds_cmd, sde_run, report_all_cmd})
        common(c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // usage errors share the exit code of every other error; --help and --version stay 0
        return app.exit(e) == 0 ? exit_ok : exit_error;
    }
    for (auto* c : {wave_solve, wave_spectrum, gap_certify, gap_small, speed_bounds_cmd, sde_run, report_all_cmd})
        if (c->parsed() && c->count("--seed")) o.seed = seed;

    auto single = [&](const std::string& file, StageResult (Pipeline::*stage)()) {
        return run(o, [&](Pipeline& p, const fs::path& dir) {
            StageResult r = (p.*stage)();
            emit(p, dir, file, r);
            return r.status;
        });
    };
    if (wave_solve->parsed()) return single("wave.json", &Pipeline::wave_solve);
    if (wave_spectrum->parsed()) return single("spectral.json", &Pipeline::wave_spectrum);
    if (gap_certify->parsed()) return single("gap.json", &Pipeline::gap_certify);
    if (gap_small->parsed()) return single("smallc.json", &Pipeline::gap_small_c);
    if (speed_bounds_cmd->parsed()) return single("speed.json", &Pipeline::speed);
    if (sde_run->parsed())
        return run(o, [&](Pipeline& p, const fs::path& dir) {
            StageResult r = p.sde_run(o.seed);
            emit(p, dir, "sde.json", r);
            return r.status;
        });
    if (report_all_cmd->parsed()) return run(o, report_all);
    return exit_error;
}
