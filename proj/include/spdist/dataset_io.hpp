#pragma once

// CSV files exchanged between pipeline stages: datasets, tensor estimates,
// posterior draws, tracking patterns and study reports. Coordinates, gradient
// indices m and draw indices t are 0-based.

#include <spdist/csv.hpp>
#include <spdist/errors.hpp>
#include <spdist/evaluation.hpp>
#include <spdist/fact_tracking.hpp>
#include <spdist/image_graph.hpp>
#include <spdist/mcmc_sampler.hpp>
#include <spdist/signal_model.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spdist::io {

namespace fs = std::filesystem;

inline constexpr const char* kProtocolFile = "protocol.csv";
inline constexpr const char* kSignalsFile = "signals.csv";
inline constexpr const char* kTruthFile = "truth.csv";
inline constexpr const char* kEstimatesFile = "estimates.csv";
inline constexpr const char* kPosteriorMeanFile = "posterior_mean.csv";
inline constexpr const char* kDrawsTensorsFile = "draws_tensors.csv";
inline constexpr const char* kDrawsScalarsFile = "draws_scalars.csv";
inline constexpr const char* kAcceptanceFile = "acceptance.csv";
inline constexpr const char* kSamplerSummaryFile = "sampler_summary.csv";
inline constexpr const char* kEdgeListFile = "graph_edges.csv";
inline constexpr const char* kPatternsFile = "patterns.csv";
inline constexpr const char* kPatternEdgesFile = "pattern_edges.csv";
inline constexpr const char* kSensitivityFile = "sensitivity.csv";
inline constexpr const char* kSweepPatternEdgesFile = "sensitivity_pattern_edges.csv";
inline constexpr const char* kQuiverFile = "quiver.csv";
inline constexpr const char* kStudyReportFile = "study_report.csv";
inline constexpr const char* kStudyReplicationsFile = "study_replications.csv";

namespace detail {

inline void put_coord(csv::Writer& w, const GridDims& dims, VoxelId v) {
    const VoxelCoord c = dims.coord(v);
    w.cell(c.x).cell(c.y).cell(c.z);
}

inline void put_tensor(csv::Writer& w, const SymMatrix3& a) {
    for (double e : a.entries()) w.cell(e);
}

inline SymMatrix3 get_tensor(const csv::Row& r) {
    return SymMatrix3::from_entries(
        {r.number("a11"), r.number("a22"), r.number("a33"), r.number("a12"), r.number("a13"), r.number("a23")});
}

inline VoxelCoord get_coord(const csv::Row& r) {
    VoxelCoord c{static_cast<int>(r.integer("voxel_x")), static_cast<int>(r.integer("voxel_y")),
                 static_cast<int>(r.integer("voxel_z"))};
    if (c.x < 0 || c.y < 0 || c.z < 0)
        throw SchemaError("line " + std::to_string(r.line()) + ": voxel coordinates must be non-negative");
    return c;
}

// Grid extent implied by the largest coordinate seen.
inline GridDims extent(const std::vector<VoxelCoord>& coords) {
    GridDims d{0, 0, 0};
    for (const VoxelCoord& c : coords) {
        d.nx = std::max(d.nx, c.x + 1);
        d.ny = std::max(d.ny, c.y + 1);
        d.nz = std::max(d.nz, c.z + 1);
    }
    return d;
}

inline std::string where(const csv::Table& t, const csv::Row& r) {
    return t.name() + ": line " + std::to_string(r.line());
}

inline const std::vector<std::string> kTensorColumns{"voxel_x", "voxel_y", "voxel_z", "a11", "a22", "a33", "a12", "a13", "a23"};

} // namespace detail

// ---------------------------------------------------------------------------
// Datasets

inline void save_dataset(const DwiDataset& data, const fs::path& dir) {
    fs::create_directories(dir);
    const AcquisitionProtocol& p = data.protocol();
    csv::Writer proto({"m", "gx", "gy", "gz", "b"});
    for (std::size_t m = 0; m < p.gradients.size(); ++m) {
        const Vec3& g = p.gradients[m].vec();
        proto.cell(m).cell(g.x).cell(g.y).cell(g.z).cell(p.b).end_row();
    }
    proto.save(dir / kProtocolFile);

    csv::Writer sig({"voxel_x", "voxel_y", "voxel_z", "m", "log_signal", "log_s0"});
    for (VoxelId v = 0; v < data.voxels(); ++v) {
        for (std::size_t m = 0; m < data.measurements(); ++m) {
            detail::put_coord(sig, data.dims(), v);
            sig.cell(m).cell(data.log_signal(v, m)).cell(data.log_s0(v)).end_row();
        }
    }
    sig.save(dir / kSignalsFile);
}

inline void save_truth(const PhantomTruth& truth, const GridDims& dims, const fs::path& dir) {
    csv::Writer w({"voxel_x", "voxel_y", "voxel_z", "mx", "my", "mz"});
    for (VoxelId v = 0; v < dims.count(); ++v) {
        if (!truth.is_fiber(v)) continue;
        const Vec3& m = truth.direction[v]->vec();
        detail::put_coord(w, dims, v);
        w.cell(m.x).cell(m.y).cell(m.z).end_row();
    }
    w.save(dir / kTruthFile);
}

inline AcquisitionProtocol load_protocol(const fs::path& path) {
    const csv::Table t = csv::Table::read(path, {"m", "gx", "gy", "gz", "b"});
    std::vector<std::optional<UnitVector3>> grads;
    std::optional<double> b;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const csv::Row r = t.row(i);
        const std::int64_t m = r.integer("m");
        if (m < 0) throw SchemaError(detail::where(t, r) + ": gradient index m must be non-negative");
        const Vec3 g{r.number("gx"), r.number("gy"), r.number("gz")};
        if (!(norm(g) > 0.0)) throw SchemaError(detail::where(t, r) + ": zero gradient direction");
        const double bm = r.number("b");
        if (b && bm != *b)
            throw SchemaError(detail::where(t, r) + ": b differs between rows; one b-value per protocol is supported");
        b = bm;
        if (static_cast<std::size_t>(m) >= grads.size()) grads.resize(static_cast<std::size_t>(m) + 1);
        if (grads[static_cast<std::size_t>(m)])
            throw SchemaError(detail::where(t, r) + ": duplicate gradient row m=" + std::to_string(m));
        grads[static_cast<std::size_t>(m)] = UnitVector3::from_normalized(g);
    }
    AcquisitionProtocol p;
    for (std::size_t m = 0; m < grads.size(); ++m) {
        if (!grads[m]) throw SchemaError(t.name() + ": missing gradient row m=" + std::to_string(m));
        p.gradients.push_back(*grads[m]);
    }
    if (p.gradients.empty()) throw SchemaError(t.name() + ": no gradient rows");
    p.b = *b;
    return p;
}

inline DwiDataset load_dataset(const fs::path& dir) {
    AcquisitionProtocol protocol = load_protocol(dir / kProtocolFile);
    const std::size_t m_count = protocol.measurements();
    const csv::Table t =
        csv::Table::read(dir / kSignalsFile, {"voxel_x", "voxel_y", "voxel_z", "m", "log_signal", "log_s0"});
    if (t.size() == 0) throw SchemaError(t.name() + ": no signal rows");

    std::vector<VoxelCoord> coords(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) coords[i] = detail::get_coord(t.row(i));
    const GridDims dims = detail::extent(coords);

    const std::size_t n = dims.count();
    std::vector<double> log_signal(n * m_count, 0.0);
    std::vector<char> seen(n * m_count, 0);
    std::vector<std::optional<double>> s0(n);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const csv::Row r = t.row(i);
        const std::int64_t m = r.integer("m");
        if (m < 0 || static_cast<std::size_t>(m) >= m_count)
            throw SchemaError(detail::where(t, r) + ": gradient index m=" + std::to_string(m) + " not in " + kProtocolFile);
        const VoxelId v = dims.id(coords[i]);
        const std::size_t slot = v * m_count + static_cast<std::size_t>(m);
        if (seen[slot]) throw SchemaError(detail::where(t, r) + ": duplicate measurement for this voxel and m");
        seen[slot] = 1;
        log_signal[slot] = r.number("log_signal");
        const double s = r.number("log_s0");
        if (s0[v] && *s0[v] != s) throw SchemaError(detail::where(t, r) + ": log_s0 differs between rows of one voxel");
        s0[v] = s;
    }
    for (VoxelId v = 0; v < n; ++v) {
        for (std::size_t m = 0; m < m_count; ++m) {
            if (seen[v * m_count + m]) continue;
            const VoxelCoord c = dims.coord(v);
            throw SchemaError(t.name() + ": missing measurement m=" + std::to_string(m) + " for voxel (" +
                              std::to_string(c.x) + "," + std::to_string(c.y) + "," + std::to_string(c.z) + ")");
        }
        protocol.log_s0.push_back(*s0[v]);
    }
    return DwiDataset(dims, std::move(protocol), std::move(log_signal));
}

// Directions per voxel from truth.csv; voxels without a row are background.
inline std::optional<std::vector<std::optional<UnitVector3>>> load_truth(const fs::path& dir, const GridDims& dims) {
    if (!fs::exists(dir / kTruthFile)) return std::nullopt;
    const csv::Table t = csv::Table::read(dir / kTruthFile, {"voxel_x", "voxel_y", "voxel_z", "mx", "my", "mz"});
    std::vector<std::optional<UnitVector3>> out(dims.count());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const csv::Row r = t.row(i);
        const VoxelCoord c = detail::get_coord(r);
        if (!dims.contains(c)) throw SchemaError(detail::where(t, r) + ": voxel outside the dataset grid");
        const Vec3 m{r.number("mx"), r.number("my"), r.number("mz")};
        if (!(norm(m) > 0.0)) throw SchemaError(detail::where(t, r) + ": zero direction");
        out[dims.id(c)] = UnitVector3::from_normalized(m);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tensor estimates

inline void save_estimates(const std::vector<SymMatrix3>& tensors, const GridDims& dims, const fs::path& path) {
    csv::Writer w({"voxel_x", "voxel_y", "voxel_z", "a11", "a22", "a33", "a12", "a13", "a23"});
    for (VoxelId v = 0; v < tensors.size(); ++v) {
        detail::put_coord(w, dims, v);
        detail::put_tensor(w, tensors[v]);
        w.end_row();
    }
    w.save(path);
}

inline std::pair<GridDims, std::vector<SymMatrix3>> load_estimates(const fs::path& path) {
    const csv::Table t = csv::Table::read(path, detail::kTensorColumns);
    std::vector<VoxelCoord> coords(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) coords[i] = detail::get_coord(t.row(i));
    const GridDims dims = detail::extent(coords);
    if (t.size() != dims.count()) throw SchemaError(t.name() + ": expected one row per voxel of the grid");
    std::vector<SymMatrix3> out(dims.count());
    std::vector<char> seen(dims.count(), 0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const VoxelId v = dims.id(coords[i]);
        if (seen[v]) throw SchemaError(detail::where(t, t.row(i)) + ": duplicate voxel");
        seen[v] = 1;
        out[v] = detail::get_tensor(t.row(i));
    }
    return {dims, std::move(out)};
}

// ---------------------------------------------------------------------------
// Posterior draws

inline void save_draws(const PosteriorDraws& d, const fs::path& dir) {
    fs::create_directories(dir);
    if (d.tensors.size() != d.draw_count() * d.voxels) throw ConfigError("draws export needs stored draws");
    csv::Writer tens({"t", "voxel_x", "voxel_y", "voxel_z", "a11", "a22", "a33", "a12", "a13", "a23"});
    for (std::size_t t = 0; t < d.draw_count(); ++t) {
        for (VoxelId v = 0; v < d.voxels; ++v) {
            tens.cell(t);
            detail::put_coord(tens, d.dims, v);
            detail::put_tensor(tens, d.tensor(t, v));
            tens.end_row();
        }
    }
    tens.save(dir / kDrawsTensorsFile);

    csv::Writer sc({"t", "sigma2", "k", "sweep"});
    for (std::size_t t = 0; t < d.draw_count(); ++t) sc.cell(t).cell(d.sigma2[t]).cell(d.k[t]).cell(d.sweep_index[t]).end_row();
    sc.save(dir / kDrawsScalarsFile);

    csv::Writer acc({"voxel_x", "voxel_y", "voxel_z", "acceptance"});
    for (VoxelId v = 0; v < d.voxels; ++v) {
        detail::put_coord(acc, d.dims, v);
        acc.cell(d.site_acceptance[v]).end_row();
    }
    acc.save(dir / kAcceptanceFile);

    csv::Writer sum({"quantity", "value"});
    sum.cell("draws").cell(d.draw_count()).end_row();
    sum.cell("mean_site_acceptance").cell(d.mean_acceptance()).end_row();
    sum.cell("k_acceptance").cell(d.k_acceptance).end_row();
    sum.cell("tuned_q").cell(d.tuned_q).end_row();
    sum.save(dir / kSamplerSummaryFile);

    save_estimates(d.posterior_mean, d.dims, dir / kPosteriorMeanFile);
}

// Reads tensors and scalars; diagnostics are not restored.
inline PosteriorDraws load_draws(const fs::path& dir) {
    const csv::Table st = csv::Table::read(dir / kDrawsScalarsFile, {"t", "sigma2", "k"});
    const csv::Table tt = csv::Table::read(
        dir / kDrawsTensorsFile, {"t", "voxel_x", "voxel_y", "voxel_z", "a11", "a22", "a33", "a12", "a13", "a23"});
    const std::size_t draws = st.size();
    if (draws == 0) throw SchemaError(st.name() + ": no draws");

    PosteriorDraws d;
    d.sigma2.resize(draws);
    d.k.resize(draws);
    d.sweep_index.resize(draws);
    std::vector<char> have(draws, 0);
    const bool has_sweep = st.column("sweep") >= 0;
    for (std::size_t i = 0; i < draws; ++i) {
        const csv::Row r = st.row(i);
        const std::int64_t t = r.integer("t");
        if (t < 0 || static_cast<std::size_t>(t) >= draws || have[static_cast<std::size_t>(t)])
            throw SchemaError(detail::where(st, r) + ": draw index t must run 0..T-1 without repeats");
        const auto ti = static_cast<std::size_t>(t);
        have[ti] = 1;
        d.sigma2[ti] = r.number("sigma2");
        d.k[ti] = r.number("k");
        d.sweep_index[ti] = has_sweep ? static_cast<std::size_t>(r.integer("sweep")) : ti + 1;
    }

    std::vector<VoxelCoord> coords(tt.size());
    for (std::size_t i = 0; i < tt.size(); ++i) coords[i] = detail::get_coord(tt.row(i));
    d.dims = detail::extent(coords);
    d.voxels = d.dims.count();
    if (tt.size() != draws * d.voxels)
        throw SchemaError(tt.name() + ": expected " + std::to_string(draws) + " draws x " + std::to_string(d.voxels) +
                          " voxels rows, found " + std::to_string(tt.size()));
    d.tensors.assign(draws * d.voxels, SymMatrix3{});
    std::vector<char> seen(draws * d.voxels, 0);
    for (std::size_t i = 0; i < tt.size(); ++i) {
        const csv::Row r = tt.row(i);
        const std::int64_t t = r.integer("t");
        if (t < 0 || static_cast<std::size_t>(t) >= draws)
            throw SchemaError(detail::where(tt, r) + ": draw index t not in " + kDrawsScalarsFile);
        const std::size_t slot = static_cast<std::size_t>(t) * d.voxels + d.dims.id(coords[i]);
        if (seen[slot]) throw SchemaError(detail::where(tt, r) + ": duplicate (t, voxel) row");
        seen[slot] = 1;
        d.tensors[slot] = detail::get_tensor(r);
    }
    d.posterior_mean.assign(d.voxels, SymMatrix3{});
    for (std::size_t t = 0; t < draws; ++t)
        for (VoxelId v = 0; v < d.voxels; ++v) d.posterior_mean[v] += d.tensor(t, v);
    for (SymMatrix3& a : d.posterior_mean) a = (1.0 / static_cast<double>(draws)) * a;
    return d;
}

inline void save_edge_list(const VoxelGraph& g, const fs::path& path) {
    csv::Writer w({"src", "dst"});
    for (const DirectedEdge& e : g.edges()) w.cell(e.src).cell(e.dst).end_row();
    w.save(path);
}

// ---------------------------------------------------------------------------
// Tracking

inline void put_edges(csv::Writer& w, std::size_t id, const Tract& edges, const GridDims& dims) {
    for (const DirectedEdge& e : edges) {
        w.cell(id);
        detail::put_coord(w, dims, e.src);
        detail::put_coord(w, dims, e.dst);
        w.end_row();
    }
}

inline void save_patterns(const std::vector<FiberPattern>& patterns, const GridDims& dims, const fs::path& dir) {
    csv::Writer p({"pattern_id", "probability", "count"});
    csv::Writer e({"pattern_id", "src_x", "src_y", "src_z", "dst_x", "dst_y", "dst_z"});
    for (std::size_t i = 0; i < patterns.size(); ++i) {
        p.cell(i).cell(patterns[i].probability).cell(patterns[i].count).end_row();
        put_edges(e, i, patterns[i].edges, dims);
    }
    p.save(dir / kPatternsFile);
    e.save(dir / kPatternEdgesFile);
}

// Long format: one row per (C, pattern) with nonzero probability.
inline void save_sensitivity(const SensitivityCurve& curve, const GridDims& dims, const fs::path& dir) {
    csv::Writer w({"C", "pattern_id", "probability"});
    for (std::size_t s = 0; s < curve.thresholds.size(); ++s)
        for (const auto& [id, c] : curve.counts[s])
            w.cell(curve.thresholds[s]).cell(id).cell(static_cast<double>(c) / static_cast<double>(curve.draws)).end_row();
    w.save(dir / kSensitivityFile);

    csv::Writer e({"pattern_id", "src_x", "src_y", "src_z", "dst_x", "dst_y", "dst_z"});
    for (std::size_t i = 0; i < curve.patterns.size(); ++i) put_edges(e, i, curve.patterns[i], dims);
    e.save(dir / kSweepPatternEdgesFile);
}

// In-plane principal direction of every voxel in every draw.
inline void save_quiver(const std::vector<DirectionField>& fields, const fs::path& path) {
    csv::Writer w({"voxel_x", "voxel_y", "voxel_z", "draw", "mx", "my"});
    for (std::size_t t = 0; t < fields.size(); ++t) {
        for (VoxelId v = 0; v < fields[t].direction.size(); ++v) {
            detail::put_coord(w, fields[t].dims, v);
            w.cell(t).cell(fields[t].direction[v].x()).cell(fields[t].direction[v].y()).end_row();
        }
    }
    w.save(path);
}

// ---------------------------------------------------------------------------
// Study

inline void save_study(const StudyResult& r, const fs::path& dir) {
    csv::Writer rep({"method", "tau", "metric", "mean", "stderr", "replications"});
    for (const StudyCell& c : r.cells)
        rep.cell(c.method).cell(c.tau).cell(c.metric).cell(c.mean).cell(c.stderr_).cell(c.replications).end_row();
    rep.save(dir / kStudyReportFile);

    csv::Writer rows({"tau", "replication", "method", "d1", "d2", "voxels", "pairs", "acceptance", "tuned_q"});
    for (const ReplicationRecord& x : r.records) {
        rows.cell(x.tau).cell(x.replication).cell(x.method).cell(x.errors.d1).cell(x.errors.d2);
        rows.cell(x.errors.voxels).cell(x.errors.pairs);
        if (x.method == kMethodSpatial) rows.cell(x.acceptance).cell(x.tuned_q);
        else rows.cell("").cell("");
        rows.end_row();
    }
    rows.save(dir / kStudyReplicationsFile);
}

} // namespace spdist::io
