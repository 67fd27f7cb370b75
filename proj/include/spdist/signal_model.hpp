#pragma once

// Log-normal diffusion signal model, its Gaussian log-likelihood, and the
// synthetic arc phantom used by the simulation study.

#include <spdist/errors.hpp>
#include <spdist/image_graph.hpp>
#include <spdist/rng.hpp>
#include <spdist/tensor_math.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spdist {

struct AcquisitionProtocol {
    std::vector<UnitVector3> gradients;
    double b = 1.0;
    // log S0 per voxel.
    std::vector<double> log_s0;

    std::size_t measurements() const { return gradients.size(); }
    friend bool operator==(const AcquisitionProtocol&, const AcquisitionProtocol&) = default;
};

class DwiDataset {
public:
    DwiDataset() = default;
    DwiDataset(GridDims dims, AcquisitionProtocol protocol, std::vector<double> log_signal)
        : dims_(dims), protocol_(std::move(protocol)), log_signal_(std::move(log_signal)) {
        validate();
    }

    const GridDims& dims() const { return dims_; }
    const AcquisitionProtocol& protocol() const { return protocol_; }
    std::size_t voxels() const { return dims_.count(); }
    std::size_t measurements() const { return protocol_.measurements(); }

    double log_signal(VoxelId v, std::size_t m) const { return log_signal_[v * measurements() + m]; }
    double log_s0(VoxelId v) const { return protocol_.log_s0[v]; }
    // Voxel-major storage: entry (v, m) at v * M + m.
    const std::vector<double>& log_signals() const { return log_signal_; }

    void validate() const {
        const std::size_t n = dims_.count(), m = protocol_.measurements();
        if (m < 6) throw SchemaError("need at least 6 gradients to identify a tensor, got " + std::to_string(m));
        if (!(protocol_.b > 0.0) || !std::isfinite(protocol_.b)) throw SchemaError("b must be positive and finite");
        if (protocol_.log_s0.size() != n) throw SchemaError("log S0 must have one entry per voxel");
        if (log_signal_.size() != n * m) throw SchemaError("log-signal table has wrong size");
        for (double s : log_signal_)
            if (!std::isfinite(s)) throw SchemaError("log signals must be finite");
        for (double s : protocol_.log_s0)
            if (!std::isfinite(s)) throw SchemaError("log S0 values must be finite");
    }

    friend bool operator==(const DwiDataset&, const DwiDataset&) = default;

private:
    GridDims dims_;
    AcquisitionProtocol protocol_;
    std::vector<double> log_signal_;
};

inline double noiseless_log_signal(const SymMatrix3& a, const UnitVector3& g, double b, double log_s0) {
    return log_s0 - b * a.quadratic(g.vec());
}

inline double noiseless_log_signal(const SpdMatrix3& a, const UnitVector3& g, double b, double log_s0) {
    return noiseless_log_signal(a.matrix(), g, b, log_s0);
}

// Squared residuals of one voxel under tensor a.
inline double voxel_ssr(const SymMatrix3& a, VoxelId v, const DwiDataset& data) {
    const auto& p = data.protocol();
    const double s0 = data.log_s0(v);
    double ssr = 0.0;
    for (std::size_t m = 0; m < p.gradients.size(); ++m) {
        const double r = data.log_signal(v, m) - noiseless_log_signal(a, p.gradients[m], p.b, s0);
        ssr += r * r;
    }
    return ssr;
}

inline double voxel_log_likelihood(const SymMatrix3& a, VoxelId v, const DwiDataset& data, double sigma2) {
    const double m = static_cast<double>(data.measurements());
    return -0.5 * m * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * voxel_ssr(a, v, data) / sigma2;
}

inline double voxel_log_likelihood(const SpdMatrix3& a, VoxelId v, const DwiDataset& data, double sigma2) {
    return voxel_log_likelihood(a.matrix(), v, data, sigma2);
}

// Quasi-uniform directions on the upper hemisphere (spherical Fibonacci).
inline std::vector<UnitVector3> hemisphere_gradients(std::size_t count) {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<UnitVector3> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double z = 1.0 - (static_cast<double>(i) + 0.5) / static_cast<double>(count);
        const double r = std::sqrt(1.0 - z * z);
        const double phi = golden * static_cast<double>(i);
        out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Phantom

// Quarter (or partial) circle in the x-y plane, repeated in every z slice.
// Voxels whose center lies within half_width of the circle and whose polar
// angle around the center lies in [angle_from_deg, angle_to_deg] belong to it.
struct ArcSpec {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 3.0;
    double half_width = 0.5;
    double angle_from_deg = 0.0;
    double angle_to_deg = 90.0;
};

struct PhantomConfig {
    GridDims dims{8, 7, 2};
    std::size_t num_gradients = 15;
    double b = 1.0;
    double log_s0 = 0.0;
    double fiber_lambda1 = 2.0;
    double fiber_lambda2 = 0.5;
    double background_lambda = 0.75;
    double tau = 0.1;
    // Default: arcs centered on the bottom-left and bottom-right corners.
    std::vector<ArcSpec> arcs{{0.0, 0.0, 3.0, 1.5, 0.0, 90.0}, {7.0, 0.0, 1.5, 0.9, 90.0, 180.0}};
};

struct PhantomTruth {
    // True fiber direction; empty for background voxels.
    std::vector<std::optional<UnitVector3>> direction;
    // Index into PhantomConfig::arcs, or -1 for background.
    std::vector<int> fiber_label;
    std::vector<SymMatrix3> tensor;

    bool is_fiber(VoxelId v) const { return direction[v].has_value(); }
    std::size_t fiber_count() const {
        std::size_t n = 0;
        for (const auto& d : direction) n += d.has_value();
        return n;
    }
};

struct Phantom {
    DwiDataset data;
    PhantomTruth truth;
    std::vector<double> noiseless; // voxel-major like DwiDataset
};

// Tangent of a circle centered at (cx, cy), at polar angle phi.
inline UnitVector3 arc_tangent(double phi) { return UnitVector3(-std::sin(phi), std::cos(phi), 0.0); }

inline AcquisitionProtocol phantom_protocol(const PhantomConfig& cfg) {
    AcquisitionProtocol p;
    p.gradients = hemisphere_gradients(cfg.num_gradients);
    p.b = cfg.b;
    p.log_s0.assign(cfg.dims.count(), cfg.log_s0);
    return p;
}

inline void validate_phantom(const PhantomConfig& cfg) {
    try {
        cfg.dims.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("phantom.dims: ") + e.what());
    }
    if (cfg.num_gradients < 6) throw ConfigError("phantom.num_gradients: need at least 6");
    if (!(cfg.b > 0.0)) throw ConfigError("phantom.b: must be positive");
    if (!(cfg.tau >= 0.0)) throw ConfigError("phantom.tau: must be non-negative");
    if (!(cfg.fiber_lambda1 > cfg.fiber_lambda2 && cfg.fiber_lambda2 > 0.0))
        throw ConfigError("phantom.fiber_lambda: need lambda1 > lambda2 > 0");
    if (!(cfg.background_lambda > 0.0)) throw ConfigError("phantom.background_lambda: must be positive");
    const double xmax = cfg.dims.nx - 0.5, ymax = cfg.dims.ny - 0.5;
    for (std::size_t i = 0; i < cfg.arcs.size(); ++i) {
        const ArcSpec& a = cfg.arcs[i];
        const std::string where = "phantom.arcs[" + std::to_string(i) + "]";
        if (!(a.radius > 0.0) || !(a.half_width > 0.0)) throw ConfigError(where + ": radius and half_width must be positive");
        if (!(a.angle_to_deg >= a.angle_from_deg)) throw ConfigError(where + ": angle_to_deg < angle_from_deg");
        constexpr int kSamples = 256;
        for (int s = 0; s <= kSamples; ++s) {
            const double deg = a.angle_from_deg + (a.angle_to_deg - a.angle_from_deg) * s / kSamples;
            const double phi = deg * std::numbers::pi / 180.0;
            const double x = a.cx + a.radius * std::cos(phi), y = a.cy + a.radius * std::sin(phi);
            if (x < -0.5 - 1e-9 || x > xmax + 1e-9 || y < -0.5 - 1e-9 || y > ymax + 1e-9)
                throw ConfigError(where + ": arc leaves the grid at angle " + std::to_string(deg));
        }
    }
}

// Fiber geometry without signals: labels, directions, and generating tensors.
inline PhantomTruth phantom_truth(const PhantomConfig& cfg) {
    validate_phantom(cfg);
    const std::size_t n = cfg.dims.count();
    PhantomTruth t;
    t.direction.assign(n, std::nullopt);
    t.fiber_label.assign(n, -1);
    t.tensor.assign(n, cfg.background_lambda * SymMatrix3::identity());
    for (VoxelId v = 0; v < n; ++v) {
        const VoxelCoord c = cfg.dims.coord(v);
        for (std::size_t i = 0; i < cfg.arcs.size(); ++i) {
            const ArcSpec& a = cfg.arcs[i];
            const double dx = c.x - a.cx, dy = c.y - a.cy;
            const double r = std::hypot(dx, dy);
            if (std::abs(r - a.radius) > a.half_width) continue;
            double deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
            if (deg < a.angle_from_deg - 1e-9) deg += 360.0;
            if (deg > a.angle_to_deg + 1e-9) continue;
            if (t.fiber_label[v] >= 0) {
                throw ConfigError("phantom.arcs[" + std::to_string(i) + "]: overlaps arc " +
                                  std::to_string(t.fiber_label[v]) + " at voxel (" + std::to_string(c.x) + "," +
                                  std::to_string(c.y) + "," + std::to_string(c.z) + ")");
            }
            const UnitVector3 m = arc_tangent(std::atan2(dy, dx));
            t.fiber_label[v] = static_cast<int>(i);
            t.direction[v] = m;
            // Principal eigenvector of this tensor is m exactly.
            t.tensor[v] = (cfg.fiber_lambda1 - cfg.fiber_lambda2) * SymMatrix3::outer(m.vec()) +
                          cfg.fiber_lambda2 * SymMatrix3::identity();
        }
    }
    return t;
}

// log S = log S0 - b g^T A g + E, E ~ N(0, tau^2) i.i.d. over (m, v).
inline Phantom simulate_phantom(const PhantomConfig& cfg, const AcquisitionProtocol& protocol, double tau, Rng& rng) {
    if (!(tau >= 0.0)) throw ConfigError("phantom.tau: must be non-negative");
    PhantomTruth truth = phantom_truth(cfg);
    const std::size_t n = cfg.dims.count(), m = protocol.measurements();
    if (protocol.log_s0.size() != n) throw ConfigError("protocol log S0 does not match the phantom grid");

    std::vector<double> clean(n * m), noisy(n * m);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (VoxelId v = 0; v < n; ++v) {
        for (std::size_t j = 0; j < m; ++j) {
            const double s = noiseless_log_signal(truth.tensor[v], protocol.gradients[j], protocol.b, protocol.log_s0[v]);
            clean[v * m + j] = s;
            noisy[v * m + j] = tau > 0.0 ? s + tau * noise(rng) : s;
        }
    }
    return Phantom{DwiDataset(cfg.dims, protocol, std::move(noisy)), std::move(truth), std::move(clean)};
}

inline Phantom simulate_phantom(const PhantomConfig& cfg, Rng& rng) {
    return simulate_phantom(cfg, phantom_protocol(cfg), cfg.tau, rng);
}

} // namespace spdist
