#pragma once

// Direction-error metrics and the replicated phantom study comparing the
// least-squares baseline with the posterior mean of the spatial model.

#include <spdist/baseline_ls.hpp>
#include <spdist/errors.hpp>
#include <spdist/image_graph.hpp>
#include <spdist/mcmc_sampler.hpp>
#include <spdist/rng.hpp>
#include <spdist/signal_model.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace spdist {

// Acute angle between true and estimated direction, radians.
inline double metric_d1(const UnitVector3& m_true, const UnitVector3& m_hat) {
    return std::acos(std::clamp(std::abs(dot(m_true, m_hat)), -1.0, 1.0));
}

// Error in the between-neighbor acute angle, radians.
inline double metric_d2(const UnitVector3& mhat_u, const UnitVector3& mhat_v, const UnitVector3& m_u,
                        const UnitVector3& m_v) {
    return std::abs(metric_d1(mhat_u, mhat_v) - metric_d1(m_u, m_v));
}

struct DirectionErrors {
    double d1 = 0.0;          // mean over fiber voxels
    double d2 = 0.0;          // mean over face-adjacent fiber-voxel pairs
    std::size_t voxels = 0;   // fiber voxels included in d1
    std::size_t pairs = 0;    // pairs included in d2
};

// Background voxels carry no true direction and are skipped.
inline DirectionErrors direction_errors(const std::vector<SymMatrix3>& estimates, const PhantomTruth& truth,
                                        const GridDims& dims) {
    if (estimates.size() != dims.count() || truth.direction.size() != dims.count())
        throw ConfigError("evaluation: estimate/truth sizes do not match the grid");
    std::vector<UnitVector3> m_hat(dims.count());
    for (VoxelId v = 0; v < dims.count(); ++v)
        if (truth.is_fiber(v)) m_hat[v] = principal_eigenvector(estimates[v]).direction;

    DirectionErrors e;
    const VoxelGraph faces = build_dag(dims, Adjacency::Face);
    for (VoxelId v = 0; v < dims.count(); ++v) {
        if (!truth.is_fiber(v)) continue;
        e.d1 += metric_d1(*truth.direction[v], m_hat[v]);
        ++e.voxels;
        for (VoxelId u : faces.parents(v)) {
            if (!truth.is_fiber(u)) continue;
            e.d2 += metric_d2(m_hat[u], m_hat[v], *truth.direction[u], *truth.direction[v]);
            ++e.pairs;
        }
    }
    if (e.voxels > 0) e.d1 /= static_cast<double>(e.voxels);
    if (e.pairs > 0) e.d2 /= static_cast<double>(e.pairs);
    return e;
}

struct StudyConfig {
    std::size_t replications = 50;
    std::vector<double> noise_levels{0.1, 0.5};
    SamplerConfig sampler = SamplerConfig::desk();
    PhantomConfig phantom;
    std::uint64_t master_seed = 20190401;
    unsigned threads = 0; // 0 = hardware concurrency

    void validate() const {
        if (replications < 1) throw ConfigError("study.replications: must be >= 1");
        if (noise_levels.empty()) throw ConfigError("study.noise_levels: need at least one level");
        for (double t : noise_levels)
            if (!(t >= 0.0)) throw ConfigError("study.noise_levels: must be non-negative");
        sampler.validate();
        validate_phantom(phantom);
    }
};

inline constexpr const char* kMethodLeastSquares = "least_squares";
inline constexpr const char* kMethodSpatial = "spdist";

struct ReplicationRecord {
    double tau = 0.0;
    std::size_t replication = 0;
    std::string method;
    DirectionErrors errors;
    double acceptance = 0.0; // sampler only
    double tuned_q = 0.0;    // sampler only
};

struct StudyCell {
    std::string method;
    double tau = 0.0;
    std::string metric; // "d1" or "d2"
    double mean = 0.0;
    double stderr_ = 0.0; // NaN with a single replication
    std::size_t replications = 0;
};

struct StudyResult {
    std::vector<StudyCell> cells;
    std::vector<ReplicationRecord> records;

    const StudyCell& cell(const std::string& method, double tau, const std::string& metric) const {
        for (const StudyCell& c : cells)
            if (c.method == method && c.tau == tau && c.metric == metric) return c;
        throw ConfigError("study: no cell for " + method + "/" + metric);
    }
};

// Sample mean and standard error (sample sd / sqrt(n)).
inline std::pair<double, double> mean_and_stderr(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    if (x.size() < 2) return {mean, std::nan("")};
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

// One replication at one noise level: simulate, fit LS, run the chain, score.
inline std::pair<ReplicationRecord, ReplicationRecord> run_replication(const StudyConfig& cfg, double tau,
                                                                        std::size_t tau_index, std::size_t r) {
    const std::uint64_t job = tau_index * cfg.replications + r;
    Rng noise_rng(derive_seed(cfg.master_seed, 2 * job));
    const Phantom ph = simulate_phantom(cfg.phantom, phantom_protocol(cfg.phantom), tau, noise_rng);

    ReplicationRecord ls{tau, r, kMethodLeastSquares, {}, 0.0, 0.0};
    ls.errors = direction_errors(LeastSquaresFitter(ph.data.protocol()).fit_all(ph.data), ph.truth, ph.data.dims());

    SamplerConfig sc = cfg.sampler;
    sc.seed = derive_seed(cfg.master_seed, 2 * job + 1);
    sc.keep_draws = false;
    const VoxelGraph graph = build_dag(ph.data.dims());
    const PosteriorDraws draws = run_chain(ph.data, graph, sc);
    ReplicationRecord sp{tau, r, kMethodSpatial, {}, draws.mean_acceptance(), draws.tuned_q};
    sp.errors = direction_errors(draws.posterior_mean, ph.truth, ph.data.dims());
    return {ls, sp};
}

using StudyProgress = std::function<void(std::size_t done, std::size_t total)>;

inline StudyResult run_simulation_study(const StudyConfig& cfg, const StudyProgress& progress = {}) {
    cfg.validate();
    const std::size_t jobs = cfg.noise_levels.size() * cfg.replications;
    std::vector<std::pair<ReplicationRecord, ReplicationRecord>> results(jobs);
    std::vector<std::exception_ptr> errors(jobs);
    std::atomic<std::size_t> next{0}, done{0};
    std::mutex progress_mutex;

    auto worker = [&] {
        for (std::size_t j = next++; j < jobs; j = next++) {
            const std::size_t ti = j / cfg.replications, r = j % cfg.replications;
            try {
                results[j] = run_replication(cfg, cfg.noise_levels[ti], ti, r);
            } catch (...) {
                errors[j] = std::current_exception();
            }
            const std::size_t d = ++done;
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(d, jobs);
            }
        }
    };
    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, jobs));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t j = 0; j < jobs; ++j) {
        if (!errors[j]) continue;
        const std::string ctx = "replication " + std::to_string(j % cfg.replications) + " (tau " +
                                std::to_string(cfg.noise_levels[j / cfg.replications]) + "): ";
        try {
            std::rethrow_exception(errors[j]);
        } catch (const ConfigError& e) {
            throw ConfigError(ctx + e.what());
        } catch (const SchemaError& e) {
            throw SchemaError(ctx + e.what());
        } catch (const std::exception& e) {
            throw NumericalError(ctx + e.what());
        }
    }

    StudyResult out;
    for (const auto& [ls, sp] : results) {
        out.records.push_back(ls);
        out.records.push_back(sp);
    }
    for (std::size_t ti = 0; ti < cfg.noise_levels.size(); ++ti) {
        for (const char* method : {kMethodLeastSquares, kMethodSpatial}) {
            std::vector<double> d1, d2;
            for (std::size_t r = 0; r < cfg.replications; ++r) {
                const auto& pair = results[ti * cfg.replications + r];
                const ReplicationRecord& rec = std::string_view(method) == kMethodLeastSquares ? pair.first : pair.second;
                d1.push_back(rec.errors.d1);
                d2.push_back(rec.errors.d2);
            }
            for (const auto& [name, values] : {std::pair{"d1", &d1}, std::pair{"d2", &d2}}) {
                const auto [mean, se] = mean_and_stderr(*values);
                out.cells.push_back({method, cfg.noise_levels[ti], name, mean, se, cfg.replications});
            }
        }
    }
    return out;
}

} // namespace spdist
