#pragma once

// File-based pipeline commands behind the command-line tool. Each command
// reads its inputs, writes CSV outputs into one directory and records a
// manifest.json from which the run can be replayed and verified.

#include <spdist/baseline_ls.hpp>
#include <spdist/config.hpp>
#include <spdist/csv.hpp>
#include <spdist/dataset_io.hpp>
#include <spdist/errors.hpp>
#include <spdist/evaluation.hpp>
#include <spdist/fact_tracking.hpp>
#include <spdist/image_graph.hpp>
#include <spdist/mcmc_sampler.hpp>
#include <spdist/rng.hpp>
#include <spdist/signal_model.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace spdist::pipeline {

namespace fs = std::filesystem;
using config::Json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestFile = "manifest.json";

class ReplayMismatch : public Error {
public:
    using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw SchemaError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_file(p))); }

// A fully resolved invocation: replaying the same request reproduces it.
struct Request {
    std::string command;
    Json args = Json::object();   // command-specific inputs (paths, flags)
    Json config = Json::object(); // resolved config sections the command uses
    std::uint64_t seed = 1;
};

struct Outcome {
    std::vector<std::string> outputs; // file names inside the output directory
    std::vector<fs::path> inputs;
    std::string summary; // one human-readable line
};

using Progress = std::function<void(const std::string&)>;

namespace detail {

inline fs::path arg_path(const Request& r, const char* key) {
    if (!r.args.contains(key) || !r.args[key].is_string())
        throw ConfigError(r.command + ": missing input '" + std::string(key) + "'");
    return fs::path(r.args[key].get<std::string>());
}

inline std::vector<fs::path> dataset_inputs(const fs::path& dir) {
    return {dir / io::kProtocolFile, dir / io::kSignalsFile};
}

inline Outcome simulate(const Request& r, const fs::path& out) {
    const PhantomConfig cfg = config::phantom_from_json(r.config.at("phantom"));
    Rng rng(r.seed);
    const Phantom ph = simulate_phantom(cfg, rng);
    io::save_dataset(ph.data, out);
    io::save_truth(ph.truth, ph.data.dims(), out);
    Outcome o;
    o.outputs = {io::kProtocolFile, io::kSignalsFile, io::kTruthFile};
    o.summary = "simulated " + std::to_string(ph.data.voxels()) + " voxels x " +
                std::to_string(ph.data.measurements()) + " measurements, " +
                std::to_string(ph.truth.fiber_count()) + " fiber voxels";
    return o;
}

inline Outcome fit_ls(const Request& r, const fs::path& out) {
    const fs::path data_dir = arg_path(r, "data");
    const DwiDataset data = io::load_dataset(data_dir);
    const std::vector<SymMatrix3> fit = LeastSquaresFitter(data.protocol()).fit_all(data);
    io::save_estimates(fit, data.dims(), out / io::kEstimatesFile);
    Outcome o;
    o.inputs = dataset_inputs(data_dir);
    o.outputs = {io::kEstimatesFile};
    o.summary = "fitted " + std::to_string(data.voxels()) + " voxels, total SSR " +
                csv::format_double(total_ssr(fit, data));
    return o;
}

inline Outcome sample(const Request& r, const fs::path& out) {
    const fs::path data_dir = arg_path(r, "data");
    SamplerConfig cfg = config::sampler_from_json(r.config.at("sampler"));
    cfg.seed = r.seed;
    cfg.keep_draws = true;
    const DwiDataset data = io::load_dataset(data_dir);
    const VoxelGraph graph = build_dag(data.dims());
    const PosteriorDraws draws = run_chain(data, graph, cfg);
    io::save_draws(draws, out);
    io::save_edge_list(graph, out / io::kEdgeListFile);
    Outcome o;
    o.inputs = dataset_inputs(data_dir);
    o.outputs = {io::kDrawsTensorsFile, io::kDrawsScalarsFile, io::kAcceptanceFile,
                 io::kSamplerSummaryFile, io::kPosteriorMeanFile, io::kEdgeListFile};
    o.summary = std::to_string(draws.draw_count()) + " draws, mean acceptance " +
                csv::format_double(draws.mean_acceptance()) + ", tuned q " + csv::format_double(draws.tuned_q);
    return o;
}

inline Outcome track(const Request& r, const fs::path& out) {
    const fs::path draws_dir = arg_path(r, "draws");
    const config::TrackingSettings t = config::tracking_from_json(r.config.at("tracking"));
    const bool sweep = r.args.value("sweep", false);
    const bool quiver = r.args.value("quiver", false);
    const PosteriorDraws draws = io::load_draws(draws_dir);
    if (t.seeds.empty()) throw ConfigError("track: no seed voxels (use --seeds or tracking.seeds)");
    const std::vector<VoxelId> seeds = config::seed_ids(t.seeds, draws.dims);
    const std::vector<DirectionField> fields = direction_fields(draws);

    Outcome o;
    o.inputs = {draws_dir / io::kDrawsTensorsFile, draws_dir / io::kDrawsScalarsFile};
    if (sweep) {
        const SensitivityCurve curve = sensitivity_sweep(fields, seeds, default_sweep_thresholds(), t.acute);
        io::save_sensitivity(curve, draws.dims, out);
        o.outputs = {io::kSensitivityFile, io::kSweepPatternEdgesFile};
        o.summary = std::to_string(curve.thresholds.size()) + " thresholds, " + std::to_string(curve.patterns.size()) +
                    " distinct patterns over " + std::to_string(curve.draws) + " draws";
    } else {
        TrackConfig tc{seeds, t.threshold_deg, t.acute};
        tc.validate(draws.dims);
        const std::vector<FiberPattern> patterns = probabilistic_track(fields, tc);
        io::save_patterns(patterns, draws.dims, out);
        o.outputs = {io::kPatternsFile, io::kPatternEdgesFile};
        o.summary = std::to_string(patterns.size()) + " patterns at C=" + csv::format_double(t.threshold_deg) +
                    ", top probability " + csv::format_double(patterns.front().probability);
    }
    if (quiver) {
        io::save_quiver(fields, out / io::kQuiverFile);
        o.outputs.push_back(io::kQuiverFile);
    }
    return o;
}

inline Outcome evaluate(const Request& r, const fs::path& out, const Progress& progress) {
    StudyConfig cfg = config::study_from_json(r.config.at("study"));
    cfg.master_seed = r.seed;
    StudyProgress p;
    if (progress) {
        p = [&](std::size_t done, std::size_t total) {
            progress("replication " + std::to_string(done) + "/" + std::to_string(total));
        };
    }
    const StudyResult res = run_simulation_study(cfg, p);
    io::save_study(res, out);
    Outcome o;
    o.outputs = {io::kStudyReportFile, io::kStudyReplicationsFile};
    o.summary = std::to_string(res.cells.size()) + " report rows from " + std::to_string(cfg.replications) +
                " replications per noise level";
    return o;
}

} // namespace detail

// Runs a request and writes its outputs (not the manifest) into `out`.
inline Outcome execute(const Request& r, const fs::path& out, const Progress& progress = {}) {
    fs::create_directories(out);
    if (r.command == "simulate") return detail::simulate(r, out);
    if (r.command == "fit-ls") return detail::fit_ls(r, out);
    if (r.command == "sample") return detail::sample(r, out);
    if (r.command == "track") return detail::track(r, out);
    if (r.command == "evaluate") return detail::evaluate(r, out, progress);
    throw ConfigError("unknown command '" + r.command + "'");
}

inline Json make_manifest(const Request& r, const Outcome& o, const fs::path& out, double wall_seconds) {
    Json inputs = Json::array();
    for (const fs::path& p : o.inputs)
        inputs.push_back({{"path", fs::absolute(p).lexically_normal().string()}, {"fnv1a64", file_hash(p)}});
    Json outputs = Json::array();
    for (const std::string& name : o.outputs) outputs.push_back({{"path", name}, {"fnv1a64", file_hash(out / name)}});
    return Json{{"tool", "spdist"},     {"version", kToolVersion}, {"command", r.command},
                {"seed", r.seed},       {"args", r.args},          {"config", r.config},
                {"inputs", inputs},     {"outputs", outputs},      {"wall_time_s", wall_seconds}};
}

// execute + manifest.json.
inline Outcome run_and_record(const Request& r, const fs::path& out, const Progress& progress = {}) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o = execute(r, out, progress);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    csv::write_file_atomic(out / kManifestFile, make_manifest(r, o, out, wall).dump(2) + "\n");
    return o;
}

inline Request request_from_manifest(const Json& m) {
    try {
        Request r;
        r.command = m.at("command").get<std::string>();
        r.seed = m.at("seed").get<std::uint64_t>();
        r.args = m.at("args");
        r.config = m.at("config");
        return r;
    } catch (const Json::exception& e) {
        throw SchemaError(std::string("manifest: ") + e.what());
    }
}

struct ReplayReport {
    std::size_t verified = 0;
    std::vector<std::string> mismatches; // empty on success
};

// Re-runs the manifest's request into `out` and compares every input and
// output hash. Throws ReplayMismatch listing the differing files.
inline ReplayReport replay(const fs::path& manifest_path, const fs::path& out, const Progress& progress = {}) {
    const Json m = config::parse_json_file(manifest_path);
    const Request r = request_from_manifest(m);
    ReplayReport rep;
    for (const Json& in : m.at("inputs")) {
        const fs::path p = in.at("path").get<std::string>();
        if (!fs::exists(p)) rep.mismatches.push_back("input missing: " + p.string());
        else if (file_hash(p) != in.at("fnv1a64").get<std::string>()) rep.mismatches.push_back("input changed: " + p.string());
    }
    if (!rep.mismatches.empty()) throw ReplayMismatch("replay: " + rep.mismatches.front());

    execute(r, out, progress);
    for (const Json& o : m.at("outputs")) {
        const std::string name = o.at("path").get<std::string>();
        if (!fs::exists(out / name)) rep.mismatches.push_back(name + " (not produced)");
        else if (file_hash(out / name) != o.at("fnv1a64").get<std::string>()) rep.mismatches.push_back(name);
        else ++rep.verified;
    }
    if (!rep.mismatches.empty()) {
        std::string list;
        for (const std::string& s : rep.mismatches) list += (list.empty() ? "" : ", ") + s;
        throw ReplayMismatch("replay: outputs differ from manifest: " + list);
    }
    return rep;
}

} // namespace spdist::pipeline
