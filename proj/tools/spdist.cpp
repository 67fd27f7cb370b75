// spdist: command-line driver for the simulate / fit / sample / track /
// evaluate pipeline. See README.md for usage.
//
// Exit status: 0 success, 1 usage, 2 configuration (including seed voxels
// outside the grid), 3 input schema, 4 numerical failure, 5 replay mismatch,
// 6 other I/O failure.

#include <spdist/config.hpp>
#include <spdist/errors.hpp>
#include <spdist/pipeline.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

namespace fs = std::filesystem;
using namespace spdist;
using pipeline::Json;

struct Options {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string data;
    std::string draws;
    std::string seeds;
    std::optional<double> threshold;
    bool sweep = false;
    bool quiver = false;
    bool raw_angles = false;
    std::string preset;
    std::string manifest;
};

config::RunConfig load_config(const Options& o) {
    if (o.config_path.empty()) return {};
    return config::load_run_config(o.config_path);
}

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

pipeline::Request resolve(const std::string& command, const Options& o) {
    config::RunConfig cfg = load_config(o);
    pipeline::Request r;
    r.command = command;
    if (command == "simulate") {
        r.seed = o.seed.value_or(1);
        r.config["phantom"] = config::to_json(cfg.phantom);
    } else if (command == "fit-ls") {
        r.seed = o.seed.value_or(1);
        r.args["data"] = absolute(o.data);
    } else if (command == "sample") {
        if (o.preset == "paper" || o.preset == "desk") {
            const SamplerConfig base = o.preset == "paper" ? SamplerConfig::paper() : SamplerConfig::desk();
            cfg.sampler.burn_in = base.burn_in;
            cfg.sampler.retained = base.retained;
            cfg.sampler.thin = base.thin;
        }
        r.seed = o.seed.value_or(cfg.sampler.seed);
        cfg.sampler.seed = r.seed;
        r.args["data"] = absolute(o.data);
        r.config["sampler"] = config::to_json(cfg.sampler);
    } else if (command == "track" || command == "sweep") {
        r.command = "track";
        r.seed = o.seed.value_or(1);
        if (!o.seeds.empty()) cfg.tracking.seeds = config::parse_seed_list(o.seeds);
        if (o.threshold) cfg.tracking.threshold_deg = *o.threshold;
        if (o.raw_angles) cfg.tracking.acute = false;
        r.args["draws"] = absolute(o.draws);
        r.args["sweep"] = command == "sweep" || o.sweep;
        r.args["quiver"] = o.quiver;
        r.config["tracking"] = config::to_json(cfg.tracking);
    } else if (command == "evaluate") {
        r.seed = o.seed.value_or(cfg.study.master_seed);
        cfg.study.master_seed = r.seed;
        r.config["study"] = config::to_json(cfg.study);
    }
    return r;
}

int run(const std::string& command, const Options& o) {
    const pipeline::Progress progress = [](const std::string& msg) { std::cerr << "\r" << msg << std::flush; };
    if (command == "replay") {
        const fs::path out = o.out.empty() ? fs::path(o.manifest).parent_path() / "replay" : fs::path(o.out);
        const pipeline::ReplayReport rep = pipeline::replay(o.manifest, out, progress);
        std::cout << "replay ok: " << rep.verified << " output files match the manifest (" << out.string() << ")\n";
        return 0;
    }
    const pipeline::Request r = resolve(command, o);
    const pipeline::Outcome res = pipeline::run_and_record(r, o.out, command == "evaluate" ? progress : pipeline::Progress{});
    if (command == "evaluate") std::cerr << "\n";
    std::cout << command << ": " << res.summary << " -> " << o.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial Wishart tensor fields, probabilistic tracking and the phantom study"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub, bool with_config) {
        sub->add_option("--out", o.out, "Output directory")->required();
        sub->add_option("--seed", o.seed, "Master seed (u64)");
        if (with_config) sub->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
    };

    CLI::App* simulate = app.add_subcommand("simulate", "Simulate the arc phantom dataset");
    common(simulate, true);

    CLI::App* fit = app.add_subcommand("fit-ls", "Voxel-wise least-squares tensor fit");
    common(fit, false);
    fit->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);

    CLI::App* sample = app.add_subcommand("sample", "Run the MCMC sampler");
    common(sample, true);
    sample->add_option("--data", o.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    sample->add_option("--preset", o.preset, "Schedule preset")->check(CLI::IsMember({"desk", "paper"}));

    CLI::App* track = app.add_subcommand("track", "Probabilistic tracking over posterior draws");
    CLI::App* sweep = app.add_subcommand("sweep", "Threshold sensitivity sweep (same as track --sweep)");
    for (CLI::App* sub : {track, sweep}) {
        common(sub, true);
        sub->add_option("--draws", o.draws, "Directory with draws CSVs")->required()->check(CLI::ExistingDirectory);
        sub->add_option("--seeds", o.seeds, "Seed voxels \"x,y,z;x,y,z\"");
        sub->add_flag("--quiver", o.quiver, "Also write per-draw in-plane directions");
        sub->add_flag("--raw-angles", o.raw_angles, "Use signed eigenvector angles instead of acute ones");
    }
    auto* thr = track->add_option("--threshold", o.threshold, "Angle threshold C in degrees");
    track->add_flag("--sweep", o.sweep, "Sweep C = 18.00 ... 28.00 in steps of 0.01")->excludes(thr);

    CLI::App* evaluate = app.add_subcommand("evaluate", "Replicated simulation study");
    common(evaluate, true);

    CLI::App* replay = app.add_subcommand("replay", "Re-run a manifest and verify outputs bit for bit");
    replay->add_option("--manifest", o.manifest, "manifest.json to replay")->required()->check(CLI::ExistingFile);
    replay->add_option("--out", o.out, "Directory for regenerated outputs (default: <manifest dir>/replay)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, o);
    } catch (const pipeline::ReplayMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 6;
    }
}
