#pragma once

// JSON configuration for the command-line pipeline. Every section is
// optional; missing fields keep their defaults and unknown fields are
// rejected with the full field path.
//
//   {
//     "phantom":  { "dims": {"nx": 8, "ny": 7, "nz": 2}, "num_gradients": 15, "b": 1,
//                   "log_s0": 0, "fiber_lambda1": 2, "fiber_lambda2": 0.5,
//                   "background_lambda": 0.75, "tau": 0.1,
//                   "arcs": [{"cx": 0, "cy": 0, "radius": 3, "half_width": 1.5,
//                             "angle_from_deg": 0, "angle_to_deg": 90}] },
//     "sampler":  { "preset": "desk" | "paper", "burn_in": 3000, "retained": 2000,
//                   "thin": 10, "target_accept": 0.4, "seed": 1, "initial_q": 100,
//                   "tune_batch": 50, "tune_gain": 10, "k_step": 0.1, "k_init": 10,
//                   "random_scan": false },
//     "tracking": { "seeds": [[x, y, z], ...], "threshold_deg": 20, "acute": true },
//     "study":    { "replications": 50, "noise_levels": [0.1, 0.5], "master_seed": 20190401,
//                   "threads": 0, "sampler": {...}, "phantom": {...} }
//   }

#include <spdist/errors.hpp>
#include <spdist/evaluation.hpp>
#include <spdist/fact_tracking.hpp>
#include <spdist/mcmc_sampler.hpp>
#include <spdist/signal_model.hpp>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <cstdio>
#include <limits>
#include <set>
#include <string>
#include <vector>

namespace spdist::config {

using Json = nlohmann::ordered_json;

// Reads fields of one JSON object and remembers which keys were used.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const { return j_.contains(key); }
    const Json& at(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        const Json& v = at(key);
        if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
        out = v.get<double>();
    }

    template <class UInt>
    void unsigned_int(const std::string& key, UInt& out) {
        if (!has(key)) return;
        const Json& v = at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            throw ConfigError(field(key) + ": expected a non-negative integer");
        const auto x = v.get<std::uint64_t>();
        if (x > std::numeric_limits<UInt>::max()) throw ConfigError(field(key) + ": value too large");
        out = static_cast<UInt>(x);
    }

    void integer(const std::string& key, int& out) {
        if (!has(key)) return;
        const Json& v = at(key);
        if (!v.is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
        const auto x = v.get<std::int64_t>();
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
            throw ConfigError(field(key) + ": value out of range");
        out = static_cast<int>(x);
    }

    void boolean(const std::string& key, bool& out) {
        if (!has(key)) return;
        const Json& v = at(key);
        if (!v.is_boolean()) throw ConfigError(field(key) + ": expected true or false");
        out = v.get<bool>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Sampler

inline SamplerConfig sampler_from_json(const Json& j, const std::string& path = "sampler") {
    ObjectReader r(j, path);
    SamplerConfig c;
    if (r.has("preset")) {
        const Json& p = r.at("preset");
        if (p == "desk") c = SamplerConfig::desk();
        else if (p == "paper") c = SamplerConfig::paper();
        else throw ConfigError(r.field("preset") + ": expected \"desk\" or \"paper\"");
    }
    r.unsigned_int("burn_in", c.burn_in);
    r.unsigned_int("retained", c.retained);
    r.unsigned_int("thin", c.thin);
    r.number("target_accept", c.target_accept);
    r.unsigned_int("seed", c.seed);
    r.number("initial_q", c.initial_q);
    r.unsigned_int("tune_batch", c.tune_batch);
    r.number("tune_gain", c.tune_gain);
    r.number("k_step", c.k_step);
    r.number("k_init", c.k_init);
    r.boolean("random_scan", c.random_scan);
    r.finish();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return c;
}

inline Json to_json(const SamplerConfig& c) {
    return Json{{"burn_in", c.burn_in},         {"retained", c.retained},     {"thin", c.thin},
                {"target_accept", c.target_accept}, {"seed", c.seed},           {"initial_q", c.initial_q},
                {"tune_batch", c.tune_batch},   {"tune_gain", c.tune_gain},   {"k_step", c.k_step},
                {"k_init", c.k_init},           {"random_scan", c.random_scan}};
}

// ---------------------------------------------------------------------------
// Phantom

inline PhantomConfig phantom_from_json(const Json& j, const std::string& path = "phantom") {
    ObjectReader r(j, path);
    PhantomConfig c;
    if (r.has("dims")) {
        ObjectReader d(r.at("dims"), r.field("dims"));
        d.integer("nx", c.dims.nx);
        d.integer("ny", c.dims.ny);
        d.integer("nz", c.dims.nz);
        d.finish();
    }
    r.unsigned_int("num_gradients", c.num_gradients);
    r.number("b", c.b);
    r.number("log_s0", c.log_s0);
    r.number("fiber_lambda1", c.fiber_lambda1);
    r.number("fiber_lambda2", c.fiber_lambda2);
    r.number("background_lambda", c.background_lambda);
    r.number("tau", c.tau);
    if (r.has("arcs")) {
        const Json& arcs = r.at("arcs");
        if (!arcs.is_array()) throw ConfigError(r.field("arcs") + ": expected an array");
        c.arcs.clear();
        for (std::size_t i = 0; i < arcs.size(); ++i) {
            ObjectReader a(arcs[i], r.field("arcs") + "[" + std::to_string(i) + "]");
            ArcSpec s;
            a.number("cx", s.cx);
            a.number("cy", s.cy);
            a.number("radius", s.radius);
            a.number("half_width", s.half_width);
            a.number("angle_from_deg", s.angle_from_deg);
            a.number("angle_to_deg", s.angle_to_deg);
            a.finish();
            c.arcs.push_back(s);
        }
    }
    r.finish();
    validate_phantom(c);
    return c;
}

inline Json to_json(const PhantomConfig& c) {
    Json arcs = Json::array();
    for (const ArcSpec& a : c.arcs) {
        arcs.push_back({{"cx", a.cx},
                        {"cy", a.cy},
                        {"radius", a.radius},
                        {"half_width", a.half_width},
                        {"angle_from_deg", a.angle_from_deg},
                        {"angle_to_deg", a.angle_to_deg}});
    }
    return Json{{"dims", {{"nx", c.dims.nx}, {"ny", c.dims.ny}, {"nz", c.dims.nz}}},
                {"num_gradients", c.num_gradients},
                {"b", c.b},
                {"log_s0", c.log_s0},
                {"fiber_lambda1", c.fiber_lambda1},
                {"fiber_lambda2", c.fiber_lambda2},
                {"background_lambda", c.background_lambda},
                {"tau", c.tau},
                {"arcs", arcs}};
}

// ---------------------------------------------------------------------------
// Tracking

struct TrackingSettings {
    std::vector<VoxelCoord> seeds;
    double threshold_deg = 20.0;
    bool acute = true;
};

// "x,y,z;x,y,z;..."
inline std::vector<VoxelCoord> parse_seed_list(const std::string& text) {
    std::vector<VoxelCoord> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find(';', start);
        if (end == std::string::npos) end = text.size();
        const std::string item = text.substr(start, end - start);
        start = end + 1;
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        VoxelCoord c;
        char trailing = 0;
        if (std::sscanf(item.c_str(), " %d , %d , %d %c", &c.x, &c.y, &c.z, &trailing) != 3)
            throw ConfigError("--seeds: cannot parse '" + item + "', expected x,y,z");
        out.push_back(c);
    }
    if (out.empty()) throw ConfigError("--seeds: no seed voxels given");
    return out;
}

inline TrackingSettings tracking_from_json(const Json& j, const std::string& path = "tracking") {
    ObjectReader r(j, path);
    TrackingSettings t;
    if (r.has("seeds")) {
        const Json& s = r.at("seeds");
        if (!s.is_array()) throw ConfigError(r.field("seeds") + ": expected an array of [x, y, z]");
        for (std::size_t i = 0; i < s.size(); ++i) {
            const Json& e = s[i];
            if (!e.is_array() || e.size() != 3 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
                !e[2].is_number_integer())
                throw ConfigError(r.field("seeds") + "[" + std::to_string(i) + "]: expected [x, y, z] integers");
            t.seeds.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<int>()});
        }
    }
    r.number("threshold_deg", t.threshold_deg);
    r.boolean("acute", t.acute);
    r.finish();
    return t;
}

inline Json to_json(const TrackingSettings& t) {
    Json seeds = Json::array();
    for (const VoxelCoord& c : t.seeds) seeds.push_back({c.x, c.y, c.z});
    return Json{{"seeds", seeds}, {"threshold_deg", t.threshold_deg}, {"acute", t.acute}};
}

// Seed coordinates to voxel ids; SeedOutOfBounds names the offending seed.
inline std::vector<VoxelId> seed_ids(const std::vector<VoxelCoord>& seeds, const GridDims& dims) {
    std::vector<VoxelId> out;
    for (const VoxelCoord& c : seeds) {
        if (!dims.contains(c)) {
            throw SeedOutOfBounds("seed (" + std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                                  std::to_string(c.z) + ") is outside the " + std::to_string(dims.nx) + "x" +
                                  std::to_string(dims.ny) + "x" + std::to_string(dims.nz) + " grid");
        }
        out.push_back(dims.id(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Study

inline StudyConfig study_from_json(const Json& j, const std::string& path = "study") {
    ObjectReader r(j, path);
    StudyConfig c;
    r.unsigned_int("replications", c.replications);
    if (r.has("noise_levels")) {
        const Json& n = r.at("noise_levels");
        if (!n.is_array()) throw ConfigError(r.field("noise_levels") + ": expected an array of numbers");
        c.noise_levels.clear();
        for (const Json& x : n) {
            if (!x.is_number()) throw ConfigError(r.field("noise_levels") + ": expected an array of numbers");
            c.noise_levels.push_back(x.get<double>());
        }
    }
    r.unsigned_int("master_seed", c.master_seed);
    r.unsigned_int("threads", c.threads);
    if (r.has("sampler")) c.sampler = sampler_from_json(r.at("sampler"), r.field("sampler"));
    if (r.has("phantom")) c.phantom = phantom_from_json(r.at("phantom"), r.field("phantom"));
    r.finish();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return c;
}

inline Json to_json(const StudyConfig& c) {
    return Json{{"replications", c.replications}, {"noise_levels", c.noise_levels}, {"master_seed", c.master_seed},
                {"threads", c.threads},           {"sampler", to_json(c.sampler)},  {"phantom", to_json(c.phantom)}};
}

// ---------------------------------------------------------------------------
// Whole file

struct RunConfig {
    PhantomConfig phantom;
    SamplerConfig sampler;
    TrackingSettings tracking;
    StudyConfig study;
};

inline RunConfig run_config_from_json(const Json& j) {
    ObjectReader r(j, "");
    RunConfig c;
    if (r.has("phantom")) c.phantom = phantom_from_json(r.at("phantom"));
    if (r.has("sampler")) c.sampler = sampler_from_json(r.at("sampler"));
    if (r.has("tracking")) c.tracking = tracking_from_json(r.at("tracking"));
    if (r.has("study")) c.study = study_from_json(r.at("study"));
    r.finish();
    return c;
}

inline Json parse_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON: " + e.what());
    }
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from_json(parse_json_file(path)); }

} // namespace spdist::config
