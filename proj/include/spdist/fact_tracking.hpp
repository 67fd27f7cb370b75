#pragma once

// FACT voxel-hopping tractography and its probabilistic version over
// posterior draws.
//
// From a current voxel u the tract moves to every Moore neighbor v with
//   theta_uv = angle(m_u, l_uv) < C   and   delta_uv = angle(m_u, m_v) < C,
// where l_uv is the unit displacement between voxel centers. Every voxel is
// expanded at most once, so a tract is the set of qualifying directed edges
// leaving voxels reachable from the seeds.

#include <spdist/errors.hpp>
#include <spdist/image_graph.hpp>
#include <spdist/mcmc_sampler.hpp>
#include <spdist/tensor_math.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <vector>

namespace spdist {

struct DirectionField {
    GridDims dims;
    std::vector<UnitVector3> direction;

    static DirectionField from_tensors(const GridDims& dims, const SymMatrix3* tensors) {
        DirectionField f{dims, {}};
        f.direction.reserve(dims.count());
        for (VoxelId v = 0; v < dims.count(); ++v) f.direction.push_back(principal_eigenvector(tensors[v]).direction);
        return f;
    }
    static DirectionField from_tensors(const GridDims& dims, const std::vector<SymMatrix3>& tensors) {
        if (tensors.size() != dims.count()) throw ConfigError("direction field: tensor count does not match grid");
        return from_tensors(dims, tensors.data());
    }
};

// One direction field per retained draw.
inline std::vector<DirectionField> direction_fields(const PosteriorDraws& draws) {
    if (draws.tensors.size() != draws.draw_count() * draws.voxels)
        throw ConfigError("tracking needs stored draws (keep_draws was off)");
    std::vector<DirectionField> out;
    out.reserve(draws.draw_count());
    for (std::size_t t = 0; t < draws.draw_count(); ++t)
        out.push_back(DirectionField::from_tensors(draws.dims, &draws.tensors[t * draws.voxels]));
    return out;
}

struct TrackConfig {
    std::vector<VoxelId> seeds;
    double threshold_deg = 20.0;
    // Acute angles via |dot|. Off compares raw eigenvector signs.
    bool acute = true;

    void validate(const GridDims& dims) const {
        if (seeds.empty()) throw ConfigError("tracking: at least one seed voxel is required");
        for (VoxelId s : seeds)
            if (s >= dims.count()) throw SeedOutOfBounds("tracking: seed voxel id " + std::to_string(s) + " is outside the grid");
        if (!(threshold_deg > 0.0 && threshold_deg < 90.0))
            throw ConfigError("tracking: threshold must lie in (0, 90) degrees");
    }
};

namespace detail {
inline double angle_deg(double cosine, bool acute) {
    if (acute) cosine = std::abs(cosine);
    return std::acos(std::clamp(cosine, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}
} // namespace detail

// Angle between two tensor directions, degrees.
inline double angle_delta(const UnitVector3& m_u, const UnitVector3& m_v, bool acute = true) {
    return detail::angle_deg(dot(m_u, m_v), acute);
}

// Angle between a tensor direction and the between-voxel direction, degrees.
inline double angle_theta(const UnitVector3& m_u, const UnitVector3& l_uv, bool acute = true) {
    return detail::angle_deg(dot(m_u, l_uv), acute);
}

inline UnitVector3 between_voxel_direction(VoxelId u, VoxelId v, const GridDims& dims) {
    const VoxelCoord a = dims.coord(u), b = dims.coord(v);
    return UnitVector3(double(b.x - a.x), double(b.y - a.y), double(b.z - a.z));
}

// The smallest C at which the step u -> v qualifies is anything above this.
inline double transition_angle(const DirectionField& f, VoxelId u, VoxelId v, bool acute) {
    const double theta = angle_theta(f.direction[u], between_voxel_direction(u, v, f.dims), acute);
    const double delta = angle_delta(f.direction[u], f.direction[v], acute);
    return std::max(theta, delta);
}

// Sorted, duplicate-free set of traversed directed edges.
using Tract = std::vector<DirectedEdge>;

inline Tract fact_track(const DirectionField& field, const TrackConfig& config) {
    config.validate(field.dims);
    const GridDims& dims = field.dims;
    std::vector<char> visited(dims.count(), 0);
    std::deque<VoxelId> frontier;
    for (VoxelId s : config.seeds) {
        if (!visited[s]) {
            visited[s] = 1;
            frontier.push_back(s);
        }
    }
    Tract edges;
    while (!frontier.empty()) {
        const VoxelId u = frontier.front();
        frontier.pop_front();
        for (VoxelId v : neighbors_tracking(u, dims)) {
            const double theta = angle_theta(field.direction[u], between_voxel_direction(u, v, dims), config.acute);
            const double delta = angle_delta(field.direction[u], field.direction[v], config.acute);
            if (!(theta < config.threshold_deg && delta < config.threshold_deg)) continue;
            edges.push_back({u, v});
            if (!visited[v]) {
                visited[v] = 1;
                frontier.push_back(v);
            }
        }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

// Seeds plus every voxel the tract enters, sorted.
inline std::vector<VoxelId> tract_voxels(const Tract& tract, const std::vector<VoxelId>& seeds) {
    std::vector<VoxelId> out(seeds);
    for (const DirectedEdge& e : tract) {
        out.push_back(e.src);
        out.push_back(e.dst);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct ActivatedEdge {
    // The edge is in the tract for every C strictly above this value.
    double threshold;
    DirectedEdge edge;
    friend constexpr auto operator<=>(const ActivatedEdge&, const ActivatedEdge&) = default;
};

// Tract membership as a function of C for one direction field. A voxel is
// reachable at C iff some path from a seed has every step angle below C, so
// its activation is the minimax path weight (Dijkstra with max in place of
// +). An edge activates at max(activation of its source, its own angle).
// Edges with activation >= max_threshold are dropped.
inline std::vector<ActivatedEdge> edge_activation(const DirectionField& field, const std::vector<VoxelId>& seeds,
                                                  bool acute = true,
                                                  double max_threshold = std::numeric_limits<double>::infinity()) {
    const GridDims& dims = field.dims;
    const std::size_t n = dims.count();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> reach(n, kInf);
    using Item = std::pair<double, VoxelId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (VoxelId s : seeds) {
        if (s >= n) throw SeedOutOfBounds("tracking: seed voxel id " + std::to_string(s) + " is outside the grid");
        reach[s] = -kInf;
        heap.push({-kInf, s});
    }
    std::vector<char> done(n, 0);
    while (!heap.empty()) {
        const auto [r, u] = heap.top();
        heap.pop();
        if (done[u]) continue;
        done[u] = 1;
        for (VoxelId v : neighbors_tracking(u, dims)) {
            const double cand = std::max(r, transition_angle(field, u, v, acute));
            if (cand < reach[v]) {
                reach[v] = cand;
                heap.push({cand, v});
            }
        }
    }
    std::vector<ActivatedEdge> out;
    for (VoxelId u = 0; u < n; ++u) {
        if (!(reach[u] < max_threshold)) continue;
        for (VoxelId v : neighbors_tracking(u, dims)) {
            const double a = std::max(reach[u], transition_angle(field, u, v, acute));
            if (a < max_threshold) out.push_back({a, {u, v}});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// The tract at threshold C from precomputed activations.
inline Tract tract_at(const std::vector<ActivatedEdge>& activations, double threshold_deg) {
    Tract t;
    for (const ActivatedEdge& a : activations) {
        if (!(a.threshold < threshold_deg)) break;
        t.push_back(a.edge);
    }
    std::sort(t.begin(), t.end());
    return t;
}

struct FiberPattern {
    Tract edges;
    std::vector<VoxelId> voxels;
    std::size_t count = 0;
    double probability = 0.0;
};

namespace detail {
inline std::vector<FiberPattern> to_patterns(std::map<Tract, std::size_t> counts, const std::vector<VoxelId>& seeds,
                                             std::size_t total) {
    std::vector<FiberPattern> out;
    out.reserve(counts.size());
    for (auto& [tract, count] : counts) {
        FiberPattern p;
        p.voxels = tract_voxels(tract, seeds);
        p.edges = tract;
        p.count = count;
        p.probability = static_cast<double>(count) / static_cast<double>(total);
        out.push_back(std::move(p));
    }
    // Map order breaks count ties by edge set.
    std::stable_sort(out.begin(), out.end(), [](const FiberPattern& a, const FiberPattern& b) { return a.count > b.count; });
    return out;
}
} // namespace detail

// Group per-draw tracts into distinct patterns, most probable first.
inline std::vector<FiberPattern> probabilistic_track(const std::vector<DirectionField>& fields, const TrackConfig& config) {
    if (fields.empty()) throw ConfigError("tracking: need at least one draw");
    std::map<Tract, std::size_t> counts;
    for (const DirectionField& f : fields) ++counts[fact_track(f, config)];
    return detail::to_patterns(std::move(counts), config.seeds, fields.size());
}

inline std::vector<FiberPattern> probabilistic_track(const PosteriorDraws& draws, const TrackConfig& config) {
    return probabilistic_track(direction_fields(draws), config);
}

// C = 18 + 0.01 s for s = 0..1000.
inline std::vector<double> default_sweep_thresholds() {
    std::vector<double> c(1001);
    for (int s = 0; s <= 1000; ++s) c[static_cast<std::size_t>(s)] = (1800.0 + s) / 100.0;
    return c;
}

struct SensitivityCurve {
    std::vector<double> thresholds;
    // Patterns seen anywhere in the sweep; id = index. Ordered by total count
    // over all thresholds, descending.
    std::vector<Tract> patterns;
    // counts[s] lists (pattern id, draw count) at thresholds[s], ids ascending.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> counts;
    std::size_t draws = 0;

    double probability(std::size_t s, std::size_t pattern) const {
        for (const auto& [id, c] : counts[s])
            if (id == pattern) return static_cast<double>(c) / static_cast<double>(draws);
        return 0.0;
    }
};

inline SensitivityCurve sensitivity_sweep(const std::vector<DirectionField>& fields, const std::vector<VoxelId>& seeds,
                                          std::vector<double> thresholds = default_sweep_thresholds(),
                                          bool acute = true) {
    if (fields.empty()) throw ConfigError("sweep: need at least one draw");
    if (seeds.empty()) throw ConfigError("sweep: at least one seed voxel is required");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw ConfigError("sweep: thresholds must be ascending");
    const double c_max = thresholds.empty() ? 0.0 : thresholds.back();

    std::map<Tract, std::size_t> ids;
    std::vector<std::map<std::size_t, std::size_t>> raw(thresholds.size());
    for (const DirectionField& f : fields) {
        const std::vector<ActivatedEdge> act = edge_activation(f, seeds, acute, c_max);
        std::size_t prefix = 0, last_prefix = std::numeric_limits<std::size_t>::max(), id = 0;
        for (std::size_t s = 0; s < thresholds.size(); ++s) {
            while (prefix < act.size() && act[prefix].threshold < thresholds[s]) ++prefix;
            if (prefix != last_prefix) {
                Tract t;
                t.reserve(prefix);
                for (std::size_t i = 0; i < prefix; ++i) t.push_back(act[i].edge);
                std::sort(t.begin(), t.end());
                id = ids.emplace(std::move(t), ids.size()).first->second;
                last_prefix = prefix;
            }
            ++raw[s][id];
        }
    }

    // Renumber by total mass.
    std::vector<std::pair<const Tract*, std::size_t>> order; // (tract, old id)
    std::vector<std::size_t> mass(ids.size(), 0);
    for (const auto& row : raw)
        for (const auto& [id, c] : row) mass[id] += c;
    for (const auto& [tract, id] : ids) order.push_back({&tract, id});
    std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) { return mass[a.second] > mass[b.second]; });
    std::vector<std::size_t> remap(ids.size());
    SensitivityCurve out;
    out.thresholds = std::move(thresholds);
    out.draws = fields.size();
    for (std::size_t i = 0; i < order.size(); ++i) {
        remap[order[i].second] = i;
        out.patterns.push_back(*order[i].first);
    }
    out.counts.resize(raw.size());
    for (std::size_t s = 0; s < raw.size(); ++s) {
        for (const auto& [id, c] : raw[s]) out.counts[s].push_back({remap[id], c});
        std::sort(out.counts[s].begin(), out.counts[s].end());
    }
    return out;
}

} // namespace spdist
